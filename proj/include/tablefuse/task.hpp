#pragma once

#include <stdexcept>
#include <string>

namespace tablefuse {

enum class TaskKind { binary, multiclass, regression, retrieval_pairs };

inline const char* task_tag(TaskKind t) {
    switch (t) {
        case TaskKind::binary: return "binary";
        case TaskKind::multiclass: return "multiclass";
        case TaskKind::regression: return "regression";
        case TaskKind::retrieval_pairs: return "retrieval_pairs";
    }
    throw std::logic_error("unknown task kind");
}

inline TaskKind task_from_tag(const std::string& tag) {
    if (tag == "binary") return TaskKind::binary;
    if (tag == "multiclass") return TaskKind::multiclass;
    if (tag == "regression") return TaskKind::regression;
    if (tag == "retrieval_pairs") return TaskKind::retrieval_pairs;
    throw std::invalid_argument("unknown task kind: " + tag);
}

// Evaluation metric per task: accuracy for multiclass, AUC for binary and
// retrieval, RMSE for regression.
inline const char* metric_name(TaskKind t) {
    switch (t) {
        case TaskKind::binary: return "auc";
        case TaskKind::multiclass: return "accuracy";
        case TaskKind::regression: return "rmse";
        case TaskKind::retrieval_pairs: return "auc";
    }
    throw std::logic_error("unknown task kind");
}

inline bool metric_higher_is_better(TaskKind t) { return t != TaskKind::regression; }

}  // namespace tablefuse
