#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probcast/errors.hpp"
#include "probcast/models.hpp"

namespace probcast {

// Self-describing checkpoint: kind, spec, build seed, parameter tensors.
// Loading validates the spec-implied shapes; any disagreement is an error.

inline nlohmann::ordered_json spec_to_json(const DeterministicSpec& s) {
    return {{"window_size", s.window_size},
            {"gru_layers", s.gru_layers},
            {"gru_cells", s.gru_cells},
            {"dense_widths", {s.dense_widths[0], s.dense_widths[1]}},
            {"feature_count", s.feature_count}};
}

inline DeterministicSpec deterministic_spec_from_json(const nlohmann::json& j) {
    DeterministicSpec s;
    s.window_size = j.at("window_size").get<Eigen::Index>();
    s.gru_layers = j.at("gru_layers").get<Eigen::Index>();
    s.gru_cells = j.at("gru_cells").get<Eigen::Index>();
    s.dense_widths = {j.at("dense_widths").at(0).get<Eigen::Index>(),
                      j.at("dense_widths").at(1).get<Eigen::Index>()};
    s.feature_count = j.at("feature_count").get<Eigen::Index>();
    return s;
}

inline nlohmann::ordered_json spec_to_json(const GeneratorSpec& s) {
    return {{"base", spec_to_json(s.base)},
            {"noise_size", s.noise_size},
            {"noise_distribution", "standard_normal"},
            {"mlp_extension_widths", {s.mlp_extension_widths[0], s.mlp_extension_widths[1]}}};
}

inline GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
    GeneratorSpec s;
    s.base = deterministic_spec_from_json(j.at("base"));
    s.noise_size = j.at("noise_size").get<Eigen::Index>();
    s.mlp_extension_widths = {j.at("mlp_extension_widths").at(0).get<Eigen::Index>(),
                              j.at("mlp_extension_widths").at(1).get<Eigen::Index>()};
    return s;
}

inline nlohmann::ordered_json spec_to_json(const DiscriminatorSpec& s) {
    return {{"gru_layers", s.gru_layers},
            {"gru_cells", s.gru_cells},
            {"dense_widths", {s.dense_widths[0], s.dense_widths[1]}},
            {"window_size", s.window_size},
            {"feature_count", s.feature_count}};
}

inline DiscriminatorSpec discriminator_spec_from_json(const nlohmann::json& j) {
    DiscriminatorSpec s;
    s.gru_layers = j.at("gru_layers").get<Eigen::Index>();
    s.gru_cells = j.at("gru_cells").get<Eigen::Index>();
    s.dense_widths = {j.at("dense_widths").at(0).get<Eigen::Index>(),
                      j.at("dense_widths").at(1).get<Eigen::Index>()};
    s.window_size = j.at("window_size").get<Eigen::Index>();
    s.feature_count = j.at("feature_count").get<Eigen::Index>();
    return s;
}

namespace detail {

inline nlohmann::ordered_json tensors_to_json(const std::vector<Matrix*>& ts) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const Matrix* m : ts) {
        nlohmann::ordered_json t;
        t["rows"] = m->rows();
        t["cols"] = m->cols();
        t["data"] = std::vector<double>(m->data(), m->data() + m->size());
        arr.push_back(std::move(t));
    }
    return arr;
}

inline void tensors_from_json(const nlohmann::json& arr, const std::vector<Matrix*>& ts) {
    if (!arr.is_array() || arr.size() != ts.size())
        throw CheckpointMismatch("checkpoint mismatch: tensor count");
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto& t = arr[i];
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        if (rows != ts[i]->rows() || cols != ts[i]->cols())
            throw CheckpointMismatch("checkpoint mismatch: tensor " + std::to_string(i) +
                                     " shape");
        auto data = t.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols)
            throw CheckpointMismatch("checkpoint mismatch: tensor " + std::to_string(i) +
                                     " payload length");
        *ts[i] = Eigen::Map<const Matrix>(data.data(), rows, cols);
    }
}

inline nlohmann::json read_checkpoint_json(const std::string& path, const char* expected_kind) {
    std::ifstream in(path);
    if (!in)
        throw IoError("checkpoint not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception&) {
        throw CheckpointMismatch("checkpoint mismatch: unreadable file " + path);
    }
    if (j.value("format", "") != "probcast-checkpoint")
        throw CheckpointMismatch("checkpoint mismatch: not a probcast checkpoint");
    if (j.value("kind", "") != expected_kind)
        throw CheckpointMismatch("checkpoint mismatch: expected kind '" +
                                 std::string(expected_kind) + "', found '" +
                                 j.value("kind", "?") + "'");
    return j;
}

template <typename Json>
inline void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

} // namespace detail

inline std::string peek_checkpoint_kind(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("checkpoint not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception&) {
        throw CheckpointMismatch("checkpoint mismatch: unreadable file " + path);
    }
    return j.value("kind", "");
}

inline void save_checkpoint(const std::string& path, const DeterministicModel& model,
                            std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["format"] = "probcast-checkpoint";
    j["version"] = 1;
    j["kind"] = "deterministic";
    j["seed"] = seed;
    j["spec"] = spec_to_json(model.spec());
    j["param_count"] = model.parameter_count();
    j["tensors"] = detail::tensors_to_json(model.tensors());
    detail::write_json_file(path, j);
}

inline void save_checkpoint(const std::string& path, const GeneratorModel& model,
                            std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["format"] = "probcast-checkpoint";
    j["version"] = 1;
    j["kind"] = "generator";
    j["seed"] = seed;
    j["spec"] = spec_to_json(model.spec());
    j["param_count"] = model.parameter_count();
    j["tensors"] = detail::tensors_to_json(model.tensors());
    detail::write_json_file(path, j);
}

inline void save_checkpoint(const std::string& path, const DiscriminatorModel& model,
                            std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["format"] = "probcast-checkpoint";
    j["version"] = 1;
    j["kind"] = "discriminator";
    j["seed"] = seed;
    j["spec"] = spec_to_json(model.spec());
    j["param_count"] = model.parameter_count();
    j["tensors"] = detail::tensors_to_json(model.tensors());
    detail::write_json_file(path, j);
}

struct LoadedDeterministic {
    DeterministicModel model;
    std::uint64_t seed;
};

struct LoadedGenerator {
    GeneratorModel model;
    std::uint64_t seed;
};

struct LoadedDiscriminator {
    DiscriminatorModel model;
    std::uint64_t seed;
};

inline LoadedDeterministic load_deterministic_checkpoint(const std::string& path) {
    auto j = detail::read_checkpoint_json(path, "deterministic");
    try {
        const auto seed = j.at("seed").get<std::uint64_t>();
        DeterministicModel model(deterministic_spec_from_json(j.at("spec")), seed);
        detail::tensors_from_json(j.at("tensors"), model.tensors());
        if (j.at("param_count").get<Eigen::Index>() != model.parameter_count())
            throw CheckpointMismatch("checkpoint mismatch: parameter count");
        return {std::move(model), seed};
    } catch (const CheckpointMismatch&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointMismatch(std::string("checkpoint mismatch: ") + e.what());
    }
}

inline LoadedGenerator load_generator_checkpoint(const std::string& path) {
    auto j = detail::read_checkpoint_json(path, "generator");
    try {
        const auto seed = j.at("seed").get<std::uint64_t>();
        GeneratorModel model(generator_spec_from_json(j.at("spec")), seed);
        detail::tensors_from_json(j.at("tensors"), model.tensors());
        if (j.at("param_count").get<Eigen::Index>() != model.parameter_count())
            throw CheckpointMismatch("checkpoint mismatch: parameter count");
        return {std::move(model), seed};
    } catch (const CheckpointMismatch&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointMismatch(std::string("checkpoint mismatch: ") + e.what());
    }
}

inline LoadedDiscriminator load_discriminator_checkpoint(const std::string& path) {
    auto j = detail::read_checkpoint_json(path, "discriminator");
    try {
        const auto seed = j.at("seed").get<std::uint64_t>();
        DiscriminatorModel model(discriminator_spec_from_json(j.at("spec")), seed);
        detail::tensors_from_json(j.at("tensors"), model.tensors());
        if (j.at("param_count").get<Eigen::Index>() != model.parameter_count())
            throw CheckpointMismatch("checkpoint mismatch: parameter count");
        return {std::move(model), seed};
    } catch (const CheckpointMismatch&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointMismatch(std::string("checkpoint mismatch: ") + e.what());
    }
}

} // namespace probcast
