#pragma once

#include <vector>

#include "tablefuse/model_zoo.hpp"

namespace tablefuse {

// Starter cards covering every modality, one lightweight and one or two
// heavier options each. Checkpoint-backed models carry checkpoint_name in
// their config; scratch-trained heads do not.
inline std::vector<ModelCard> builtin_model_cards() {
    std::vector<ModelCard> cards;
    auto add = [&cards](ModelCard c) { cards.push_back(std::move(c)); };

    {
        ModelCard c;
        c.name = "google/flan-t5-small";
        c.model_type = "hf_text";
        c.modalities = {Modality::text};
        c.description =
            "Compact instruction-tuned text encoder-decoder. Small footprint and fast inference "
            "on CPU devices, well suited to lightweight and mobile deployments.";
        c.performance_notes = "Strong text classification quality for its size class.";
        c.hardware_requirements = "Runs comfortably on CPU; under 1 GB memory.";
        c.output_feature_dim = 512;
        c.config = {{"checkpoint_name", "google/flan-t5-small"}, {"max_text_len", 512},
                    {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "bert-large-uncased";
        c.model_type = "hf_text";
        c.modalities = {Modality::text};
        c.description =
            "Large bidirectional text encoder. Highest text accuracy in the zoo when ample GPU "
            "memory and latency budget are available.";
        c.performance_notes = "Top-tier accuracy on text benchmarks; slow on CPU.";
        c.hardware_requirements = "GPU with 16 GB memory recommended.";
        c.output_feature_dim = 1024;
        c.config = {{"checkpoint_name", "bert-large-uncased"}, {"max_text_len", 512},
                    {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "roberta-base";
        c.model_type = "hf_text";
        c.modalities = {Modality::text};
        c.description = "Mid-sized robustly pretrained text encoder balancing accuracy and cost.";
        c.performance_notes = "Solid general-purpose text accuracy.";
        c.hardware_requirements = "GPU preferred; workable on CPU for small batches.";
        c.output_feature_dim = 768;
        c.config = {{"checkpoint_name", "roberta-base"}, {"max_text_len", 512}, {"loss_weight", 1.0}};
        add(c);
    }

    {
        ModelCard c;
        c.name = "mobilenetv3_large_100";
        c.model_type = "timm_image";
        c.modalities = {Modality::image_path};
        c.description =
            "Efficient convolutional image backbone designed for mobile and CPU devices; "
            "lightweight deployment with low latency and a small memory footprint.";
        c.performance_notes = "Good accuracy per FLOP; ideal when efficiency matters most.";
        c.hardware_requirements = "CPU friendly; no GPU required.";
        c.output_feature_dim = 1280;
        c.config = {{"checkpoint_name", "mobilenetv3_large_100"}, {"image_size", 224},
                    {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "vit_large_patch14_224";
        c.model_type = "timm_image";
        c.modalities = {Modality::image_path};
        c.description =
            "Large vision transformer backbone for maximum image accuracy on server GPUs.";
        c.performance_notes = "State-of-the-art image accuracy; heavy compute.";
        c.hardware_requirements = "GPU with 24 GB memory recommended.";
        c.output_feature_dim = 1024;
        c.config = {{"checkpoint_name", "vit_large_patch14_224"}, {"image_size", 224},
                    {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "resnet50";
        c.model_type = "timm_image";
        c.modalities = {Modality::image_path};
        c.description = "Classic residual network backbone; a balanced default for images.";
        c.performance_notes = "Dependable mid-range accuracy.";
        c.hardware_requirements = "GPU preferred; acceptable on CPU.";
        c.output_feature_dim = 2048;
        c.config = {{"checkpoint_name", "resnet50"}, {"image_size", 224}, {"loss_weight", 1.0}};
        add(c);
    }

    {
        ModelCard c;
        c.name = "categorical_mlp";
        c.model_type = "tabular";
        c.modalities = {Modality::categorical};
        c.description =
            "Small multilayer perceptron over one-hot categorical features; trains from scratch, "
            "lightweight and fast on CPU.";
        c.performance_notes = "Reliable for low-cardinality categorical data.";
        c.hardware_requirements = "CPU only.";
        c.output_feature_dim = 64;
        c.config = {{"hidden_sizes", "[64,64]"}, {"dropout", 0.1}, {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "categorical_transformer";
        c.model_type = "tabular";
        c.modalities = {Modality::categorical};
        c.description = "Transformer over categorical token embeddings for richer interactions.";
        c.performance_notes = "Stronger on high-cardinality categorical data; costlier to train.";
        c.hardware_requirements = "GPU recommended for large tables.";
        c.output_feature_dim = 192;
        c.config = {{"num_blocks", 3}, {"token_dim", 192}, {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "numerical_mlp";
        c.model_type = "tabular";
        c.modalities = {Modality::numerical};
        c.description =
            "Small multilayer perceptron over standardized numerical features; trains from "
            "scratch, lightweight and fast on CPU.";
        c.performance_notes = "Strong baseline for dense numerical data.";
        c.hardware_requirements = "CPU only.";
        c.output_feature_dim = 64;
        c.config = {{"hidden_sizes", "[64,64]"}, {"dropout", 0.1}, {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "numerical_transformer";
        c.model_type = "tabular";
        c.modalities = {Modality::numerical};
        c.description = "Transformer with learned numerical feature tokens.";
        c.performance_notes = "Can beat the MLP on wide numerical tables.";
        c.hardware_requirements = "GPU recommended for large tables.";
        c.output_feature_dim = 192;
        c.config = {{"num_blocks", 3}, {"token_dim", 192}, {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "ft_transformer";
        c.model_type = "tabular";
        c.modalities = {Modality::numerical, Modality::categorical};
        c.description =
            "Feature-tokenizer transformer handling numerical and categorical columns together; "
            "the model with the best performance on tabular data in this zoo.";
        c.performance_notes = "Excellent results across tabular benchmarks.";
        c.hardware_requirements = "GPU recommended; CPU workable for small tables.";
        c.output_feature_dim = 192;
        c.config = {{"num_blocks", 3}, {"token_dim", 192}, {"loss_weight", 1.0}};
        add(c);
    }

    {
        ModelCard c;
        c.name = "video_feature_mlp";
        c.model_type = "video";
        c.modalities = {Modality::video_path};
        c.description =
            "Lightweight perceptron over precomputed clip features; efficient CPU choice for "
            "video signals.";
        c.performance_notes = "Fast and small; depends on feature quality.";
        c.hardware_requirements = "CPU only.";
        c.output_feature_dim = 128;
        c.config = {{"hidden_sizes", "[128,128]"}, {"loss_weight", 1.0}};
        add(c);
    }
    {
        ModelCard c;
        c.name = "video_swin_tiny";
        c.model_type = "video";
        c.modalities = {Modality::video_path};
        c.description = "Hierarchical video transformer for clip understanding.";
        c.performance_notes = "Strong video accuracy; needs GPU throughput.";
        c.hardware_requirements = "GPU with 12 GB memory recommended.";
        c.output_feature_dim = 768;
        c.config = {{"checkpoint_name", "video_swin_tiny"}, {"frames", 16}, {"loss_weight", 1.0}};
        add(c);
    }

    return cards;
}

inline void populate_builtin_zoo(ModelZoo& zoo, LlmGateway& gateway) {
    for (auto& card : builtin_model_cards()) zoo.add_card(gateway, std::move(card));
}

}  // namespace tablefuse
