#pragma once

#include <cctype>
#include <stdexcept>
#include <string>
#include <vector>

#include "tablefuse/detail/strings.hpp"

namespace tablefuse {

// One entry per LLM-backed stage call site.
enum class Purpose {
    modality,
    filter,
    impute,
    select,
    assemble_processors,
    assemble_fusion,
    hpo_describe,
    hpo_space,
};

inline const char* purpose_tag(Purpose p) {
    switch (p) {
        case Purpose::modality: return "modality";
        case Purpose::filter: return "filter";
        case Purpose::impute: return "impute";
        case Purpose::select: return "select";
        case Purpose::assemble_processors: return "assemble_processors";
        case Purpose::assemble_fusion: return "assemble_fusion";
        case Purpose::hpo_describe: return "hpo_describe";
        case Purpose::hpo_space: return "hpo_space";
    }
    throw std::logic_error("unknown purpose");
}

inline Purpose purpose_from_tag(const std::string& tag) {
    for (Purpose p : {Purpose::modality, Purpose::filter, Purpose::impute, Purpose::select,
                      Purpose::assemble_processors, Purpose::assemble_fusion,
                      Purpose::hpo_describe, Purpose::hpo_space})
        if (tag == purpose_tag(p)) return p;
    throw std::invalid_argument("unknown purpose tag: " + tag);
}

struct FewShotBlock {
    std::string input;   // rendered payload following "Input: "
    std::string output;  // rendered payload following "Output: "
};

namespace prompts {

// System prompt texts for each stage. Any newline layout change here changes
// request fingerprints and invalidates recorded fixtures.

inline constexpr const char* kModalitySystem =
    "You are a helpful assistant that analyzes data modalities in multimodal Auto-Machine "
    "learning task.\n"
    "Your task is to analyze the data type of each column of the pandas.DataFrame tabular data.\n"
    "Your answer must be in a strict JSON format: {\"column name\": \"data type\"}.\n"
    "You can analyze the data type based on the corresponding column name,column data and the "
    "user instructions, which may include the context of tasks/datasets, etc..\n"
    "You should not omit any column of data in your answer.";

inline constexpr const char* kFilterSystem =
    "You are a helpful assistant that applies feature engineering, especially feature "
    "selection.\n"
    "Given a set of features, your task is to filter out some features that are not relevant to "
    "the specific task.\n"
    "You should filter out the features based on the feature names, feature type and user "
    "instrucions, which may contain the context of tasks/datasets, etc..\n"
    "You cannot forge features that are not in the Input.\n"
    "In particular, image features should be preserved.";

inline constexpr const char* kImputeSystem =
    "You are a helpful assistant that applies feature engineering, especially data imputation.\n"
    "Given a feature sequence, your task is to predict missing values in it. Missing values are "
    "represented by \"???\".\n"
    "You should predict missing values based on other feature values in the sequence and, you "
    "can refer to user instructions, which may contrain context of the task/dataset, etc...\n"
    "Your output format must be a certain element value, don't reply the reasoning process.";

inline constexpr const char* kSelectSystem =
    "I am a deep learning software develop engineer, you're a code compiler, and we're working "
    "together on a multimodal Auto-Machine learning task.\n"
    "Given the dataset description and user request , your task is to help the user to select a "
    "suitable model.\n"
    "You should focus more on the description of the models and find the model that has the "
    "most potential to solve requests and tasks.\n"
    "Your answer must be in a strict JSON format: {\"name\": \"model name\", \"reason\": \"your "
    "reasons to select the model\"}.\n"
    "Please choose the most suitable model from:\n"
    "{model_cards}";

inline constexpr const char* kProcessorsSystem =
    "You are a helpful assistant that writes data processors code to load different types of "
    "data for multimodal Auto-Machine learning task.\n"
    "Since different types of models need different data preprocessing, your task is to write a "
    "function to return the corresponding data processors based on models' config.\n"
    "Specifically, you do not need to define the data processor for fusion model, and the label "
    "data processor is also required to provide label data for each model.\n"
    "The function return must be in a strict dict format: {\"data type\": \"data processor\"}.\n"
    "Please specify the library you imported in the code.\n"
    "\n"
    "Here are some data processors code for you reference:\n"
    "\n"
    "from multimodal.data import ImageProcessor\n"
    "class ImageProcessor:\n"
    "    def __init__(self,model_config):\n"
    "    ...\n"
    "\n"
    "from multimodal.data import TextProcessor\n"
    "class TextProcessor:\n"
    "    def __init__(self,model_config):\n"
    "    ...\n"
    "\n"
    "from multimodal.data import CategoricalProcessor\n"
    "class CategoricalProcessor:\n"
    "    def __init__(self,model_config):\n"
    "    ...";

inline constexpr const char* kFusionSystem =
    "You are a helpful assistant that writes the Deep learning model code.\n"
    "You task is to write a fusion model to fuse different base models' features.\n"
    "Use # before every line except the python code.\n"
    "Here are some model code for you reference:\n"
    "\n"
    "from multimodal.models import CategoricalTransformer\n"
    "class CategoricalTransformer(nn.Module):\n"
    "    def __init__(self,model_config):\n"
    "    ...\n"
    "\n"
    "from multimodal.models import NumericalTransformer\n"
    "class NumericalTransformer(nn.Module):\n"
    "    def __init__(self,model_config):\n"
    "    ...\n"
    "\n"
    "from multimodal.models import TimmAutoModelForImagePrediction\n"
    "class TimmAutoModelForImagePrediction(nn.Module):\n"
    "    def __init__(self,model_config):\n"
    "    ...\n"
    "\n"
    "from multimodal.models import HFAutoModelForTextPrediction\n"
    "class HFAutoModelForTextPrediction(nn.Module):\n"
    "    def __init__(self,model_config):\n"
    "    ...\n"
    "\n"
    "Given some base models' config as follow:{base_configs};\n"
    "Give the fusion model config as follow:\n"
    "{fusion_config}\n"
    "\n"
    "You should then respond to me the code with:\n"
    "1). Fusion technique should be learnable, MLP is recommended.\n"
    "2). The fusion model structure should be defined as fusion_model and fusion_head,which "
    "output features and logits, respectively.\n"
    "3). Base models instance should be defined in Fusion model Class.You should not change the "
    "value of the output of base model instances.\n"
    "4). All base models have a uniform variable(self.out_features_dim) to represent the output "
    "features dimension.\n"
    "5). Finding the maximum dimension of all base models' output features, and define "
    "learnable linear layers to adapt all base models' output features to the maximum dimension "
    "as the input of fusion_model. For example, if three models have feature dimensions are "
    "[512, 768, 64], it will linearly map all the features to dimension 768.\n"
    "6). Output the logits,features,loss weights of fusion model and base models.The return "
    "must be in a JSON format: {model_name:{\"logits\":...,\"features\":...,\"weight\":...}}.\n"
    "7). All the network layers and variable self.model_name,self.loss_weight should be defined "
    "in function __init__, not in function forward.\n"
    "8). Some variables are not present in each model's config,you cannot use a variable that "
    "does not exist in the corresponding model config.\n"
    "\n"
    "You should only respond in the format as described below :\n"
    "Class Fusion:\n"
    "    def __init__(self,...)\n"
    "    ...\n"
    "    def forward(self,batch)\n"
    "    ...\n"
    "    fusion_features = self.fusion_model(...)\n"
    "    fusion_logits   = self.fusion_head(fusion_features)\n"
    "    ...";

inline constexpr const char* kHpoDescribeSystem =
    "You are a helpful assistant that explains machine learning training configurations.\n"
    "Given a configuration file, your task is to write a short description for each "
    "hyperparameter in it.\n"
    "Your answer must be in a strict JSON format: {\"hyperparameter_name\": \"description\"}.\n"
    "You should not omit any hyperparameter of the configuration in your answer.";

inline constexpr const char* kHpoSpaceSystem =
    "You are a helpful assistant that infers the hyperparameters and their search ranges for "
    "hyperparameter optimization in machine learning task.\n"
    "You can use the format:[,,,] to represent a discrete search range.\n"
    "You can choose up 3 hyperparameters that you think are most suitable for hyperparameter "
    "optimization.\n"
    "Your answer must be in a strict JSON format: {\"hyperparameter_name\":\"search_range\"}.\n"
    "\n"
    "Here are some things you need to focus on:\n"
    "(1).If the values in the search space are of type INT or FLOAT, then the search space "
    "needs to have at least 3 values.\n"
    "(2).The search ranges should refer to the original value of the config. The search ranges "
    "should include the original value of the config.\n"
    "(3).You should not output the hyperparameters don't need to optimize.\n"
    "(4).You cannot forge parameters that are not in the configuration file.\n"
    "(5).If the \"checkpoint_name\" is in config, only the \"loss_weight\" is taken.";

inline const char* system_template(Purpose p) {
    switch (p) {
        case Purpose::modality: return kModalitySystem;
        case Purpose::filter: return kFilterSystem;
        case Purpose::impute: return kImputeSystem;
        case Purpose::select: return kSelectSystem;
        case Purpose::assemble_processors: return kProcessorsSystem;
        case Purpose::assemble_fusion: return kFusionSystem;
        case Purpose::hpo_describe: return kHpoDescribeSystem;
        case Purpose::hpo_space: return kHpoSpaceSystem;
    }
    throw std::logic_error("unknown purpose");
}

// Substitutes a single {placeholder} occurrence; placeholder names are
// lower_snake identifiers.
inline std::string substitute(std::string text, const std::string& placeholder,
                              const std::string& value) {
    const std::string token = "{" + placeholder + "}";
    const auto pos = text.find(token);
    if (pos == std::string::npos)
        throw std::logic_error("placeholder not found in template: " + token);
    return text.replace(pos, token.size(), value);
}

inline std::string render_example_blocks(const std::vector<FewShotBlock>& blocks) {
    std::string out = "\n\nHere are some examples for your reference:\n";
    for (const auto& b : blocks) out += "Input: " + b.input + "\nOutput: " + b.output + "\n";
    return out;
}

// True when text still contains an unresolved {placeholder} token. JSON format
// descriptions like {"name": ...} do not match because a quote follows the brace.
inline bool has_unresolved_placeholder(const std::string& text) {
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        if (text[i] != '{') continue;
        std::size_t j = i + 1;
        if (!(std::islower(static_cast<unsigned char>(text[j])) || text[j] == '_')) continue;
        while (j < text.size() &&
               (std::islower(static_cast<unsigned char>(text[j])) ||
                std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '_'))
            ++j;
        if (j < text.size() && text[j] == '}') return true;
    }
    return false;
}

}  // namespace prompts

struct PromptBundle {
    Purpose purpose = Purpose::modality;
    std::string system_text;
    std::string user_text;
    std::vector<FewShotBlock> few_shot_blocks;

    // Stable across runs and platforms for identical content.
    std::string fingerprint() const {
        std::uint64_t h = detail::fnv1a64(purpose_tag(purpose));
        h = detail::fnv1a64("\x1f", h);
        h = detail::fnv1a64(system_text, h);
        h = detail::fnv1a64("\x1f", h);
        h = detail::fnv1a64(user_text, h);
        return detail::to_hex(h);
    }

    void validate() const {
        if (prompts::has_unresolved_placeholder(system_text))
            throw std::invalid_argument("unresolved placeholder in system text");
        if (prompts::has_unresolved_placeholder(user_text))
            throw std::invalid_argument("unresolved placeholder in user text");
    }

    // Returns a copy whose user text carries an appended corrective
    // instruction; the copy has its own fingerprint so replay still works.
    PromptBundle with_correction(const std::string& instruction) const {
        PromptBundle out = *this;
        out.user_text += "\n" + instruction;
        return out;
    }
};

}  // namespace tablefuse
