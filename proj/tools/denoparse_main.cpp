#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "denoparse/dataset.hpp"
#include "denoparse/errors.hpp"
#include "denoparse/trainer.hpp"

using namespace denoparse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

SupervisionMode parse_supervision(const std::string& s) {
    if (s == "gold") return SupervisionMode::Gold;
    if (s == "denotation") return SupervisionMode::Denotation;
    throw ValidationError("--supervision must be 'gold' or 'denotation', got '" + s + "'");
}

GrammarMode parse_brackets(const std::string& s) {
    if (s == "on") return GrammarMode::WithBrackets;
    if (s == "off") return GrammarMode::NoBrackets;
    throw ValidationError("--brackets must be 'on' or 'off', got '" + s + "'");
}

struct GenDataArgs {
    std::uint64_t seed = 0;
    std::size_t total = 8000;
    std::size_t train = 6000;
    std::optional<std::size_t> test;
    std::string out_train, out_test;
};

void run_gen_data(const GenDataArgs& args) {
    if (args.test && *args.test + args.train != args.total) {
        throw ValidationError("--test must equal --total minus --train");
    }
    auto [train, test] = generate_datasets(args.seed, args.total, args.train);
    save_dataset(args.out_train, train);
    save_dataset(args.out_test, test);
    std::printf("wrote %zu train records to %s\n", train.size(), args.out_train.c_str());
    std::printf("wrote %zu test records to %s\n", test.size(), args.out_test.c_str());
}

struct BuildIndexArgs {
    int max_size = 4;
    std::string out;
};

void run_build_index(const BuildIndexArgs& args) {
    if (args.max_size < 2 || args.max_size > 4) {
        throw ValidationError("--max-size must be between 2 and 4");
    }
    DenotationTable table = DenotationTable::build(args.max_size);
    std::vector<int> sizes;
    for (int n = 2; n <= args.max_size; ++n) sizes.push_back(n);
    persist_index(table, sizes, args.out);
    std::printf("wrote candidate index (sizes 2..%d) to %s\n", args.max_size, args.out.c_str());
}

struct TrainArgs {
    std::string supervision = "denotation";
    std::string brackets = "off";
    int epochs = 200;
    std::uint64_t seed = 0;
    std::string curriculum = "3:20,5:20,7:160";
    double lr = 0.001, rho = 0.9, eps = 1e-8;
    std::string train_path, test_path, index_path, base_cases;
    std::string metrics = "metrics.tsv";
    std::string checkpoint = "model.ckpt";
    bool quiet = false;
};

void run_train(const TrainArgs& args) {
    TrainConfig config;
    config.supervision = parse_supervision(args.supervision);
    config.grammar = parse_brackets(args.brackets);
    config.epochs = args.epochs;
    config.seed = args.seed;
    config.curriculum = parse_curriculum(args.curriculum);
    config.lr = args.lr;
    config.rho = args.rho;
    config.eps = args.eps;
    config.train_path = args.train_path;
    config.test_path = args.test_path;
    config.index_path = args.index_path;
    config.base_case_path = args.base_cases;
    config.metrics_path = args.metrics;
    config.checkpoint_path = args.checkpoint;

    EpochCallback echo;
    if (!args.quiet) {
        echo = [](const EpochMetrics& m) {
            std::printf("%s\n", metrics_line(m).c_str());
            std::fflush(stdout);
        };
    }
    std::vector<EpochMetrics> history = run_training(config, echo);
    if (!history.empty()) {
        std::printf("final test denotation accuracy: %.6f\n",
                    history.back().test_denotation_accuracy);
    }
    std::printf("metrics: %s\ncheckpoint: %s\n", args.metrics.c_str(), args.checkpoint.c_str());
}

struct EvalArgs {
    std::string checkpoint, test_path;
};

void run_eval(const EvalArgs& args) {
    Checkpoint ck = load_checkpoint(args.checkpoint);
    Dataset test = load_dataset(args.test_path);
    EvalResult r = evaluate(test, ck.params, ck.grammar);
    std::printf("grammar: %s\n", grammar_mode_name(ck.grammar));
    std::printf("denotation accuracy: %.6f (%d/%d)\n", r.accuracy, r.correct, r.total);
}

// --- report ---------------------------------------------------------------

std::vector<EpochMetrics> load_metrics(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open metrics file: " + path);
    std::vector<EpochMetrics> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::stringstream ss(line);
        std::vector<std::string> fields;
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 5) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": expected 5 tab-separated fields");
        }
        EpochMetrics m;
        try {
            m.epoch = std::stoi(fields[0]);
            m.mean_loss = std::stod(fields[1]);
            m.returned_correct_fraction = std::stod(fields[2]);
            m.test_denotation_accuracy = std::stod(fields[3]);
            m.skipped = std::stoi(fields[4]);
        } catch (const std::logic_error&) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": non-numeric field");
        }
        rows.push_back(m);
    }
    return rows;
}

void write_csv(std::ostream& os, const std::vector<EpochMetrics>& rows) {
    os << "epoch,mean_loss,returned_correct_fraction,test_denotation_accuracy,skipped\n";
    char buf[160];
    for (const EpochMetrics& m : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%d\n", m.epoch, m.mean_loss,
                      m.returned_correct_fraction, m.test_denotation_accuracy, m.skipped);
        os << buf;
    }
}

struct ReportArgs {
    std::string metrics;             // single-run mode
    std::vector<std::string> runs;   // supervision:brackets:path
    std::string csv;                 // single-run CSV destination
};

void run_report(const ReportArgs& args) {
    if (args.metrics.empty() == args.runs.empty()) {
        throw ValidationError("report needs exactly one of --metrics or --run");
    }

    if (!args.metrics.empty()) {
        std::vector<EpochMetrics> rows = load_metrics(args.metrics);
        if (args.csv.empty()) {
            write_csv(std::cout, rows);
        } else {
            std::ofstream os(args.csv, std::ios::trunc);
            if (!os) throw IoError("cannot write CSV: " + args.csv);
            write_csv(os, rows);
            std::printf("wrote %zu rows to %s\n", rows.size(), args.csv.c_str());
        }
        return;
    }

    // Multi-run mode: a supervision x brackets grid of final accuracies.
    std::map<std::pair<std::string, std::string>, double> final_acc;
    for (const std::string& spec_text : args.runs) {
        std::stringstream ss(spec_text);
        std::string supervision, brackets, path;
        if (!std::getline(ss, supervision, ':') || !std::getline(ss, brackets, ':') ||
            !std::getline(ss, path)) {
            throw ValidationError("--run must look like SUPERVISION:BRACKETS:PATH");
        }
        parse_supervision(supervision);  // spelling check
        parse_brackets(brackets);
        std::vector<EpochMetrics> rows = load_metrics(path);
        if (rows.empty()) throw ValidationError("metrics file is empty: " + path);
        final_acc[{supervision, brackets}] = rows.back().test_denotation_accuracy;
    }

    auto cell = [&](const char* supervision, const char* brackets) {
        auto it = final_acc.find({supervision, brackets});
        if (it == final_acc.end()) return std::string("     -");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%5.1f%%", it->second * 100.0);
        return std::string(buf);
    };
    std::printf("final test denotation accuracy\n");
    std::printf("%-12s  %-12s  %-12s\n", "", "NoBrackets", "WithBrackets");
    std::printf("%-12s  %-12s  %-12s\n", "gold", cell("gold", "off").c_str(),
                cell("gold", "on").c_str());
    std::printf("%-12s  %-12s  %-12s\n", "denotation", cell("denotation", "off").c_str(),
                cell("denotation", "on").c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weak-supervision arithmetic semantic parsing workbench"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read long-option defaults from an INI file");

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Sample utterance/denotation datasets");
    gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
    gen_cmd->add_option("--total", gen.total, "Total distinct expressions")->capture_default_str();
    gen_cmd->add_option("--train", gen.train, "Training-set size")->capture_default_str();
    gen_cmd->add_option("--test", gen.test, "Test-set size (must be total - train)");
    gen_cmd->add_option("--out-train", gen.out_train, "Training-set path")->required();
    gen_cmd->add_option("--out-test", gen.out_test, "Test-set path")->required();

    BuildIndexArgs idx;
    auto* idx_cmd = app.add_subcommand("build-index", "Precompute the denotation candidate index");
    idx_cmd->add_option("--max-size", idx.max_size, "Largest operand count")->capture_default_str();
    idx_cmd->add_option("--out", idx.out, "Index path")->required();

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "Train the parser");
    tr_cmd->add_option("--supervision", tr.supervision, "gold | denotation")->capture_default_str();
    tr_cmd->add_option("--brackets", tr.brackets, "on | off")->capture_default_str();
    tr_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
    tr_cmd->add_option("--seed", tr.seed)->capture_default_str();
    tr_cmd->add_option("--curriculum", tr.curriculum, "LENGTH:EPOCHS,...")->capture_default_str();
    tr_cmd->add_option("--lr", tr.lr)->capture_default_str();
    tr_cmd->add_option("--rho", tr.rho)->capture_default_str();
    tr_cmd->add_option("--eps", tr.eps)->capture_default_str();
    tr_cmd->add_option("--train", tr.train_path, "Training set")->required();
    tr_cmd->add_option("--test", tr.test_path, "Test set")->required();
    tr_cmd->add_option("--index", tr.index_path, "Candidate index (denotation mode)");
    tr_cmd->add_option("--base-cases", tr.base_cases, "Base-case TSV (default: built-in)");
    tr_cmd->add_option("--metrics", tr.metrics, "Metrics output")->capture_default_str();
    tr_cmd->add_option("--checkpoint", tr.checkpoint, "Checkpoint output")->capture_default_str();
    tr_cmd->add_flag("--quiet", tr.quiet, "Suppress per-epoch stdout lines");

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev_cmd->add_option("--checkpoint", ev.checkpoint)->required();
    ev_cmd->add_option("--test", ev.test_path)->required();

    ReportArgs rp;
    auto* rp_cmd = app.add_subcommand("report", "Emit curve CSV or a summary grid");
    rp_cmd->add_option("--metrics", rp.metrics, "Single metrics file -> CSV");
    rp_cmd->add_option("--run", rp.runs, "SUPERVISION:BRACKETS:PATH (repeatable)");
    rp_cmd->add_option("--csv", rp.csv, "CSV destination (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (gen_cmd->parsed()) run_gen_data(gen);
        if (idx_cmd->parsed()) run_build_index(idx);
        if (tr_cmd->parsed()) run_train(tr);
        if (ev_cmd->parsed()) run_eval(ev);
        if (rp_cmd->parsed()) run_report(rp);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    }
    return kExitOk;
}
