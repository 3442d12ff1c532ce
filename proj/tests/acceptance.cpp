// Acceptance gate. Runs every criterion at full scale and prints one
// PASS/FAIL line per criterion on stdout (progress streams on stderr).
// Expect a multi-hour wall clock on one core; training artifacts land in
// ./acceptance_work (override with DENOPARSE_ACCEPT_DIR) and are re-used
// only for the deterministic inputs (datasets, candidate index), never for
// model runs. DENOPARSE_ACCEPT=fast swaps in a tiny smoke tier to debug the
// harness; it always exits nonzero because its numbers mean nothing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "denoparse/errors.hpp"
#include "denoparse/trainer.hpp"

using namespace denoparse;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double minutes_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

struct Verdict {
    int num;
    bool pass;
    std::string detail;
};
std::vector<Verdict> verdicts;

void verdict(int num, bool pass, std::string detail) {
    std::fprintf(stderr, "# AC%d resolved: %s\n", num, pass ? "PASS" : "FAIL");
    verdicts.push_back(Verdict{num, pass, std::move(detail)});
}

std::string pct(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * x);
    return buf;
}

std::string mins(double m) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f min", m);
    return buf;
}

TgtSeq tgt_from_string(const std::string& text) {
    TgtSeq out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        auto id = tgt_token_id(w);
        if (!id) throw ValidationError("unknown target token: " + w);
        out.push_back(*id);
    }
    return out;
}

double rel_err(double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1e-3});
    return std::fabs(a - b) / scale;
}

// ---------------------------------------------------------------------------
// Scale: the real tier is the full reproduction workload; the smoke tier
// only exercises the harness end to end.
// ---------------------------------------------------------------------------

struct Scale {
    std::size_t full_total = 8000, full_train = 6000;
    std::size_t red_total = 1300, red_train = 1000;
    int full_epochs = 200, red_epochs = 100;
    std::vector<CurriculumStage> full_cur = default_curriculum();
    std::vector<CurriculumStage> red_cur = {{3, 10}, {5, 10}, {7, 80}};
    int ac2_samples = 50;
};

Scale smoke_scale() {
    Scale s;
    s.full_total = 400;
    s.full_train = 300;
    s.red_total = 260;
    s.red_train = 200;
    s.full_epochs = 4;
    s.red_epochs = 3;
    s.full_cur = {{3, 1}, {5, 1}, {7, 2}};
    s.red_cur = {{3, 1}, {5, 1}, {7, 1}};
    s.ac2_samples = 4;
    return s;
}

fs::path g_work;
Scale g_scale;

// Datasets and the candidate index are deterministic functions of their
// parameters, so they are cached on disk (the loaders revalidate).
struct SplitPaths {
    std::string train, test;
};

SplitPaths ensure_datasets(std::uint64_t seed, std::size_t total, std::size_t train) {
    SplitPaths p;
    char buf[96];
    std::snprintf(buf, sizeof buf, "data_s%llu_t%zu_n%zu",
                  static_cast<unsigned long long>(seed), total, train);
    p.train = (g_work / (std::string(buf) + ".train.tsv")).string();
    p.test = (g_work / (std::string(buf) + ".test.tsv")).string();
    try {
        load_dataset(p.train);
        load_dataset(p.test);
        return p;
    } catch (const std::exception&) {
    }
    std::fprintf(stderr, "# generating datasets %s\n", buf);
    auto [tr, te] = generate_datasets(seed, total, train);
    save_dataset(p.train, tr);
    save_dataset(p.test, te);
    return p;
}

std::string ensure_index() {
    const std::string path = (g_work / "index.tsv").string();
    try {
        CandidateIndex::load(path);
        return path;
    } catch (const std::exception&) {
    }
    std::fprintf(stderr, "# building candidate index (operand counts 2-4)\n");
    persist_index(DenotationTable::build(4), {2, 3, 4}, path);
    return path;
}

// ---------------------------------------------------------------------------
// Training runs.
// ---------------------------------------------------------------------------

struct RunResult {
    std::string tag;
    std::uint64_t seed = 0;
    std::vector<EpochMetrics> history;
    double final_acc = 0.0;
    double minutes = 0.0;
    std::string metrics_path;
};

RunResult do_run(const std::string& tag, SupervisionMode sup, GrammarMode gram,
                 int epochs, const std::vector<CurriculumStage>& cur,
                 const SplitPaths& data, const std::string& index,
                 std::uint64_t seed) {
    TrainConfig cfg;
    cfg.supervision = sup;
    cfg.grammar = gram;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.curriculum = cur;
    cfg.train_path = data.train;
    cfg.test_path = data.test;
    if (sup == SupervisionMode::Denotation) cfg.index_path = index;
    cfg.metrics_path = (g_work / (tag + ".metrics.tsv")).string();
    cfg.checkpoint_path = (g_work / (tag + ".ckpt")).string();

    std::fprintf(stderr, "# run %s: %s/%s, %d epochs, seed %llu\n", tag.c_str(),
                 supervision_name(sup), grammar_mode_name(gram), epochs,
                 static_cast<unsigned long long>(seed));
    const auto t0 = Clock::now();
    RunResult r;
    r.tag = tag;
    r.seed = seed;
    r.metrics_path = cfg.metrics_path;
    r.history = run_training(cfg, [&](const EpochMetrics& m) {
        if (m.epoch % 10 == 0 || m.epoch == epochs - 1) {
            std::fprintf(stderr, "#   %s epoch %d/%d loss %.3f rcf %.3f acc %.3f\n",
                         tag.c_str(), m.epoch, epochs, m.mean_loss,
                         m.returned_correct_fraction, m.test_denotation_accuracy);
        }
    });
    r.minutes = minutes_since(t0);
    r.final_acc = r.history.empty() ? 0.0 : r.history.back().test_denotation_accuracy;
    std::fprintf(stderr, "# run %s done: final acc %s in %s\n", tag.c_str(),
                 pct(r.final_acc).c_str(), mins(r.minutes).c_str());
    return r;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Criteria 1-3: oracles and fixtures.
// ---------------------------------------------------------------------------

void ac1_gradients() {
    const auto t0 = Clock::now();
    ModelDims dims;
    dims.embed = 4;
    dims.hidden = 4;
    dims.att_hidden = 4;
    Rng rng(3);
    ModelParams p = ModelParams::init(dims, rng);
    const SrcSeq src = Utterance::parse("five plus three times two")->padded();
    const TgtSeq tgt = tgt_from_string("Go [ 5 + ( 3 * 2 ) ] End");

    Rng fwd(0);
    ForwardTrace trace;
    nll(p, src, tgt, Dropout::Off, fwd, &trace);
    ModelParams grads = backprop(trace, p);

    const double h = 1e-4;
    auto pv = p.tensors();
    auto gv = grads.tensors();
    double worst = 0.0;
    for (std::size_t t = 0; t < pv.size(); ++t) {
        for (std::size_t k = 0; k < pv[t].size; ++k) {
            double& theta = pv[t].data[k];
            const double saved = theta;
            Rng r1(0), r2(0);
            theta = saved + h;
            const double up = nll(p, src, tgt, Dropout::Off, r1);
            theta = saved - h;
            const double down = nll(p, src, tgt, Dropout::Off, r2);
            theta = saved;
            worst = std::max(worst, rel_err(gv[t].data[k], (up - down) / (2.0 * h)));
        }
    }
    const double m = minutes_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "gradient oracle: max relative error %.2e over %zu tensors (%s)",
                  worst, pv.size(), mins(m).c_str());
    verdict(1, worst < 1e-4 && m < 1.0, buf);
}

void ac2_dp_oracle() {
    const auto t0 = Clock::now();
    auto table = DenotationTable::build(4);
    std::size_t checked = 0, mismatched = 0;
    for (int size : {2, 3}) {
        for (GrammarMode mode : {GrammarMode::WithBrackets, GrammarMode::NoBrackets}) {
            for (const auto& d : table.reachable(size)) {
                ++checked;
                if (table.enumerate_candidates(d, size, mode).members !=
                    brute_force_candidates(d, size, mode).members)
                    ++mismatched;
            }
        }
    }
    const auto& vals = table.reachable(4);
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < g_scale.ac2_samples; ++trial) {
        const auto& d = vals[rng() % vals.size()];
        for (GrammarMode mode : {GrammarMode::WithBrackets, GrammarMode::NoBrackets}) {
            ++checked;
            if (table.enumerate_candidates(d, 4, mode).members !=
                brute_force_candidates(d, 4, mode).members)
                ++mismatched;
        }
    }
    const double m = minutes_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "candidate enumeration vs brute force: %zu/%zu sets equal (%s)",
                  checked - mismatched, checked, mins(m).c_str());
    verdict(2, mismatched == 0 && m < 5.0, buf);
}

void ac3_executor_rows() {
    struct Row {
        const char* utt;
        const char* form;
        long long num, den;
    };
    const Row rows[] = {
        {"one plus two", "Go [ 1 + 2 ] End", 3, 1},
        {"three minus four times five", "Go [ 3 - ( 4 * 5 ) ] End", -17, 1},
        {"one times two divide three", "Go ( ( 1 * 2 ) / 3 ) End", 2, 3},
        {"two divide four plus five", "Go [ ( 2 / 4 ) + 5 ] End", 11, 2},
        {"five divide one times two plus three", "Go [ ( ( 5 / 1 ) * 2 ) + 3 ] End", 13, 1},
        {"four minus two times three plus one", "Go [ [ 4 - ( 2 * 3 ) ] + 1 ] End", -1, 1},
        {"three divide four minus five plus two", "Go [ [ ( 3 / 4 ) - 5 ] + 2 ] End", -9, 4},
    };
    int good = 0;
    for (const Row& r : rows) {
        const Rational want(r.num, r.den);
        auto u = Utterance::parse(r.utt);
        auto tree = parse_logical_form(tgt_from_string(r.form), GrammarMode::WithBrackets);
        if (u && tree && evaluate(precedence_parse(u->flat())) == want &&
            evaluate(*tree) == want)
            ++good;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "executor fixtures: %d/7 rows exact", good);
    verdict(3, good == 7, buf);
}

}  // namespace

// ---------------------------------------------------------------------------

int main() {
    const char* tier = std::getenv("DENOPARSE_ACCEPT");
    const bool smoke = tier && std::string(tier) == "fast";
    if (smoke) g_scale = smoke_scale();
    const char* dir = std::getenv("DENOPARSE_ACCEPT_DIR");
    g_work = dir ? fs::path(dir) : fs::path("acceptance_work");

    try {
        fs::create_directories(g_work);
        if (smoke)
            std::fprintf(stderr, "# smoke tier: harness check only, exit is forced nonzero\n");

        ac1_gradients();
        ac2_dp_oracle();
        ac3_executor_rows();

        const SplitPaths full = ensure_datasets(0, g_scale.full_total, g_scale.full_train);
        const SplitPaths reduced = ensure_datasets(0, g_scale.red_total, g_scale.red_train);
        const std::string index = ensure_index();

        // -- gold, flat grammar (criterion 4 + the determinism rerun) --
        RunResult gold_flat =
            do_run("gold_flat_full", SupervisionMode::Gold, GrammarMode::NoBrackets,
                   g_scale.full_epochs, g_scale.full_cur, full, index, 0);
        const std::string first_bytes = read_bytes(gold_flat.metrics_path);
        RunResult gold_flat_again =
            do_run("gold_flat_full", SupervisionMode::Gold, GrammarMode::NoBrackets,
                   g_scale.full_epochs, g_scale.full_cur, full, index, 0);
        const std::string second_bytes = read_bytes(gold_flat_again.metrics_path);

        std::vector<RunResult> reduced_runs;
        for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
            reduced_runs.push_back(do_run("gold_flat_reduced_s" + std::to_string(seed),
                                          SupervisionMode::Gold, GrammarMode::NoBrackets,
                                          g_scale.red_epochs, g_scale.red_cur, reduced,
                                          index, seed));
            const RunResult& r = reduced_runs.back();
            if (r.final_acc >= 0.90 && r.minutes < 15.0) break;
        }
        {
            const bool full_ok = gold_flat.final_acc >= 0.95;
            bool red_ok = false;
            std::string red_detail;
            for (const RunResult& r : reduced_runs) {
                red_ok = red_ok || (r.final_acc >= 0.90 && r.minutes < 15.0);
                if (!red_detail.empty()) red_detail += ", ";
                red_detail += "seed " + std::to_string(r.seed) + " " + pct(r.final_acc) +
                              " in " + mins(r.minutes);
            }
            verdict(4, full_ok && red_ok,
                    "gold flat: full run " + pct(gold_flat.final_acc) + " in " +
                        mins(gold_flat.minutes) + " (need >=95%); reduced run needs >=90% " +
                        "under 15 min, got " + red_detail);
        }

        // -- gold, bracketed grammar (criterion 5) --
        RunResult gold_br =
            do_run("gold_brackets_full", SupervisionMode::Gold, GrammarMode::WithBrackets,
                   g_scale.full_epochs, g_scale.full_cur, full, index, 0);
        verdict(5, gold_br.final_acc >= 0.85,
                "gold brackets: " + pct(gold_br.final_acc) + " in " + mins(gold_br.minutes) +
                    " (need >=85%)");

        // -- denotation supervision (criterion 6), up to 3 seeds per grammar --
        auto seed_sweep = [&](GrammarMode gram, double bar, const char* stem) {
            std::vector<RunResult> runs;
            for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
                runs.push_back(do_run(std::string(stem) + "_s" + std::to_string(seed),
                                      SupervisionMode::Denotation, gram,
                                      g_scale.full_epochs, g_scale.full_cur, full, index,
                                      seed));
                if (runs.back().final_acc >= bar) break;
            }
            return runs;
        };
        const std::vector<RunResult> den_flat =
            seed_sweep(GrammarMode::NoBrackets, 0.60, "den_flat");
        const std::vector<RunResult> den_br =
            seed_sweep(GrammarMode::WithBrackets, 0.55, "den_brackets");
        auto sweep_detail = [](const std::vector<RunResult>& runs) {
            std::string out;
            for (const RunResult& r : runs) {
                if (!out.empty()) out += ", ";
                out += "seed " + std::to_string(r.seed) + " " + pct(r.final_acc);
            }
            return out;
        };
        const bool flat_ok = std::any_of(den_flat.begin(), den_flat.end(),
                                         [](const RunResult& r) { return r.final_acc >= 0.60; });
        const bool br_ok = std::any_of(den_br.begin(), den_br.end(),
                                       [](const RunResult& r) { return r.final_acc >= 0.55; });
        verdict(6, flat_ok && br_ok,
                "denotation: flat needs >=60%, got " + sweep_detail(den_flat) +
                    "; brackets needs >=55%, got " + sweep_detail(den_br));

        // -- returned-form behavior (criterion 7), from the flat run above --
        {
            const RunResult* pick = &den_flat.front();
            for (const RunResult& r : den_flat)
                if (r.final_acc >= 0.60) {
                    pick = &r;
                    break;
                }
            const std::size_t n = pick->history.size();
            const std::size_t take = std::min<std::size_t>(10, n);
            double mean = 0.0;
            for (std::size_t k = n - take; k < n; ++k)
                mean += pick->history[k].returned_correct_fraction;
            mean /= take == 0 ? 1.0 : static_cast<double>(take);
            const bool in_band = mean >= 0.30 && mean <= 0.60;
            const bool above = pick->final_acc > mean;
            verdict(7, in_band && above,
                    "returned-correct fraction, final-" + std::to_string(take) +
                        "-epoch mean " + pct(mean) + " (need 30-60%); final accuracy " +
                        pct(pick->final_acc) + (above ? " exceeds it" : " does not exceed it") +
                        " [" + pick->tag + "]");
        }

        // -- ordering (criterion 8), seed-0 cells, 2-point tolerance --
        {
            const double gf = gold_flat.final_acc, gb = gold_br.final_acc;
            const double df = den_flat.front().final_acc, db = den_br.front().final_acc;
            const double tol = 0.02;
            const bool ok = gf >= df - tol && gb >= db - tol && gf >= gb - tol && df >= db - tol;
            verdict(8, ok,
                    "ordering at seed 0 (2-point tolerance): gold " + pct(gf) + "/" + pct(gb) +
                        " vs denotation " + pct(df) + "/" + pct(db) + " (flat/brackets)");
        }

        // -- consistency audit (criterion 9), every denotation epoch --
        {
            long long violations = 0, epochs = 0;
            for (const auto* sweep : {&den_flat, &den_br})
                for (const RunResult& r : *sweep)
                    for (const EpochMetrics& m : r.history) {
                        ++epochs;
                        violations += m.consistency_violations;
                    }
            verdict(9, epochs > 0 && violations == 0,
                    "training-target consistency: " + std::to_string(violations) +
                        " violations across " + std::to_string(epochs) +
                        " denotation-mode epochs");
        }

        // -- determinism (criterion 10) --
        {
            const bool same = !first_bytes.empty() && first_bytes == second_bytes;
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "determinism: repeated full run metrics %s (%zu bytes)",
                          same ? "byte-identical" : "differ", first_bytes.size());
            verdict(10, same, buf);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "# aborted: %s\n", e.what());
        std::printf("acceptance: aborted: %s\n", e.what());
        return 3;
    }

    int passed = 0;
    for (const Verdict& v : verdicts) {
        std::printf("AC%-2d %s  %s\n", v.num, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        if (v.pass) ++passed;
    }
    std::printf("acceptance: %d/%zu criteria passed%s\n", passed, verdicts.size(),
                smoke ? " (smoke tier, not a verdict)" : "");
    if (smoke) return 2;
    return passed == static_cast<int>(verdicts.size()) ? 0 : 1;
}
