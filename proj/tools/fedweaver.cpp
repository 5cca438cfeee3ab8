/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fedweaver/fimsm_model.hpp"
#include "fedweaver/scenario.hpp"
#include "fedweaver/trust_fabric.hpp"
#include "fedweaver/wire.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitFailure = 2;

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

bool write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        return false;
    }
    out << content;
    return static_cast<bool>(out);
}

std::string trim(std::string text) {
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) {
        text.pop_back();
    }
    std::size_t start = 0;
    while (start < text.size() && (text[start] == ' ' || text[start] == '\t')) {
        ++start;
    }
    return text.substr(start);
}

int run_command(const std::string& path, std::uint64_t seed, const std::string& trace) {
    auto config = fedweaver::scenario::load_scenario(path);
    if (!config.ok()) {
        std::cerr << "error: " << config.error().message;
        if (config.error().line > 0) {
            std::cerr << " (line " << config.error().line << ")";
        }
        std::cerr << "\n";
        return kExitInternal;
    }

    auto report = fedweaver::scenario::run_scenario(config.value(), seed, trace);
    if (!report.ok()) {
        std::cerr << "error: " << report.error().message << "\n";
        return kExitInternal;
    }
    std::cout << report.value().render();

    bool violation = false;
    for (const auto& model_report :
         fedweaver::scenario::emit_model_reports(config.value())) {
        for (const auto& finding : model_report.findings) {
            if (finding.severity == fedweaver::fimsm::Severity::Violation) {
                std::cout << "model violation [" << model_report.entity_id
                          << "]: " << finding.rule_id << " " << finding.message << "\n";
                violation = true;
            }
        }
    }
    return report.value().all_passed() && !violation ? kExitOk : kExitFailure;
}

int validate_command(const std::string& path, bool with_report) {
    auto text = read_file(path);
    if (!text.has_value()) {
        std::cerr << "error: cannot open '" << path << "'\n";
        return kExitInternal;
    }
    auto model = fedweaver::fimsm::load_model(*text);
    if (!model.ok()) {
        const auto& error = model.error();
        std::cerr << (error.kind == fedweaver::fimsm::ModelError::Kind::Parse ? "parse error"
                                                                              : "schema error")
                  << ": " << error.message;
        if (error.line > 0) {
            std::cerr << " (line " << error.line;
            if (error.column > 0) {
                std::cerr << ", column " << error.column;
            }
            std::cerr << ")";
        }
        std::cerr << "\n";
        return kExitInternal;
    }

    auto findings = fedweaver::fimsm::validate_model(model.value());
    std::cout << fedweaver::fimsm::render_findings(findings);
    if (with_report) {
        std::cout << fedweaver::fimsm::gap_report(model.value());
    }
    bool blocking = std::any_of(findings.begin(), findings.end(), [](const auto& finding) {
        return finding.severity == fedweaver::fimsm::Severity::Gap ||
               finding.severity == fedweaver::fimsm::Severity::Violation;
    });
    return blocking ? kExitFailure : kExitOk;
}

int aggregate_command(const std::string& registry_path, const std::string& out_path,
                      std::uint64_t now, const std::string& key_out) {
    auto file = fedweaver::scenario::load_registry_file(registry_path);
    if (!file.ok()) {
        std::cerr << "error: " << file.error().message << "\n";
        return kExitInternal;
    }

    fedweaver::trust::Registry registry;
    registry.federation_id = file.value().federation_id;
    registry.ttp_key = fedweaver::crypto::signing_key_from_seed(file.value().ttp_key_seed);
    registry.last_serial = file.value().serial;
    for (const auto& spec : file.value().entities) {
        auto registered = fedweaver::trust::register_entity(
            registry, fedweaver::scenario::descriptor_from_spec(spec, 0));
        if (!registered.ok()) {
            std::cerr << "error: " << registered.error().detail << "\n";
            return kExitInternal;
        }
    }
    auto metadata = fedweaver::trust::aggregate_metadata(registry, now, file.value().validity);
    if (!metadata.ok()) {
        std::cerr << "error: " << metadata.error().detail << "\n";
        return kExitInternal;
    }
    if (!write_file(out_path, fedweaver::trust::metadata_to_wire(metadata.value()))) {
        std::cerr << "error: cannot write '" << out_path << "'\n";
        return kExitInternal;
    }
    if (!key_out.empty() &&
        !write_file(key_out,
                    fedweaver::wire::hex_encode(registry.ttp_key.verify_key) + "\n")) {
        std::cerr << "error: cannot write '" << key_out << "'\n";
        return kExitInternal;
    }
    std::cout << "aggregated " << metadata.value().members.size() << " members, serial "
              << metadata.value().serial << "\n";
    return kExitOk;
}

int verify_command(const std::string& blob_path, const std::string& key_path,
                   std::uint64_t now) {
    auto blob = read_file(blob_path);
    auto key_text = read_file(key_path);
    if (!blob.has_value() || !key_text.has_value()) {
        std::cerr << "error: cannot open input files\n";
        return kExitInternal;
    }
    auto key = fedweaver::wire::hex_decode(trim(*key_text));
    if (!key.ok()) {
        std::cerr << "error: key file is not hex\n";
        return kExitInternal;
    }
    auto metadata = fedweaver::trust::verify_metadata(*blob, key.value(), now);
    if (!metadata.ok()) {
        std::cout << "verification failed: " << to_string(metadata.error().code) << " ("
                  << metadata.error().detail << ")\n";
        return kExitFailure;
    }
    std::cout << "federation: " << metadata.value().federation_id << "\n";
    std::cout << "serial: " << metadata.value().serial << "\n";
    std::cout << "valid: " << metadata.value().valid_from << ".."
              << metadata.value().valid_until << "\n";
    for (const auto& member : metadata.value().members) {
        std::cout << "member: " << member.entity_id << " loa="
                  << fedweaver::trust::to_string(member.loa) << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedweaver: a desk-scale federated identity testbed"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::uint64_t seed = 42;
    std::string trace_path;
    auto* run = app.add_subcommand("run", "run a scenario file");
    run->add_option("scenario", scenario_path, "scenario file (.scn)")->required();
    run->add_option("--seed", seed, "run seed");
    run->add_option("--trace", trace_path, "write the audit trace to this path");

    std::string model_path;
    bool with_report = false;
    auto* validate = app.add_subcommand("validate", "validate an entity model file");
    validate->add_option("model", model_path, "model file (.fim)")->required();
    validate->add_flag("--report", with_report, "print the gap report");

    auto* metadata = app.add_subcommand("metadata", "federation metadata tools");
    metadata->require_subcommand(1);

    std::string registry_path;
    std::string out_path;
    std::string key_out;
    std::uint64_t now = 0;
    auto* aggregate = metadata->add_subcommand("aggregate", "sign a metadata aggregate");
    aggregate->add_option("--registry", registry_path, "registry file")->required();
    aggregate->add_option("--out", out_path, "output metadata file")->required();
    aggregate->add_option("--now", now, "logical publication time");
    aggregate->add_option("--key-out", key_out, "also write the TTP verify key (hex)");

    std::string blob_path;
    std::string key_path;
    std::uint64_t verify_now = 0;
    auto* verify = metadata->add_subcommand("verify", "verify a metadata aggregate");
    verify->add_option("metadata", blob_path, "metadata file")->required();
    verify->add_option("--key", key_path, "TTP verify key file (hex)")->required();
    verify->add_option("--now", verify_now, "logical verification time");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return run_command(scenario_path, seed, trace_path);
        }
        if (validate->parsed()) {
            return validate_command(model_path, with_report);
        }
        if (aggregate->parsed()) {
            return aggregate_command(registry_path, out_path, now, key_out);
        }
        if (verify->parsed()) {
            return verify_command(blob_path, key_path, verify_now);
        }
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
