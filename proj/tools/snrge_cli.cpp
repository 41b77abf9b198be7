#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snrge/snrge.h"

namespace {

// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.
int exit_code(snrge_status s) {
  switch (s) {
    case SNRGE_OK: return 0;
    case SNRGE_E_USAGE: return 1;
    case SNRGE_E_DATA: return 2;
    case SNRGE_E_NUMERIC: return 3;
    default: return 2;
  }
}

struct Failure {
  snrge_status status;
};

void check(snrge_status s) {
  if (s != SNRGE_OK) throw Failure{s};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  operator T*() const { return p; }
};

using ConfigH = Handle<snrge_config, snrge_config_free>;
using DatasetH = Handle<snrge_dataset, snrge_dataset_free>;
using EmbedderH = Handle<snrge_embedder, snrge_embedder_free>;
using ReportH = Handle<snrge_report, snrge_report_free>;

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  int threads = 0;
};

void load_config(const Globals& g, ConfigH& cfg) {
  if (g.config_file.empty()) {
    check(snrge_config_new(cfg.out()));
  } else {
    check(snrge_config_load(g.config_file.c_str(), cfg.out()));
  }
  for (const auto& s : g.sets) check(snrge_config_assign(cfg, s.c_str()));
}

void open_or_synthesize(const std::string& dir, const snrge_config* cfg, DatasetH& ds) {
  if (dir.empty()) {
    check(snrge_dataset_synthesize(cfg, ds.out()));
  } else {
    check(snrge_dataset_open(dir.c_str(), ds.out()));
  }
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void write_report(const snrge_report* r, const std::string& out) {
  check(snrge_report_write(r, out.c_str()));
  std::printf("wrote %s\n", out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic whistle dataset generation and generated-audio evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_file, "key = value configuration file");
  app.add_option("-s,--set", g.sets, "override a configuration key (key=value)")->allow_extra_args(false);
  app.add_option("-j,--threads", g.threads, "worker threads (overrides SNRGE_THREADS)")
      ->check(CLI::NonNegativeNumber);
  app.fallthrough();

  std::string out, dataset_dir, source_dir, model, method;
  std::vector<std::string> fragments;
  bool per_snr = false, all_snr = false;

  auto* gen = app.add_subcommand("generate-dataset", "synthesize the labeled dataset to WAV files");
  gen->add_option("-o,--out", out, "output directory")->required();

  auto* sim = app.add_subcommand("simulate", "write simulated candidate clips per level");
  sim->add_option("-d,--dataset", dataset_dir, "dataset directory (default: synthesize)");
  sim->add_option("-o,--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train-embedder", "train the triplet-loss embedder");
  tr->add_option("-d,--dataset", dataset_dir, "dataset directory (default: synthesize)");
  tr->add_option("-o,--out", out,
                 "checkpoint file (--all-snr) or model directory (--per-snr)")->required();
  auto* f_per = tr->add_flag("--per-snr", per_snr, "one whistle-vs-noise network per level");
  auto* f_all = tr->add_flag("--all-snr", all_snr, "one network over all levels and noise");
  f_per->excludes(f_all);
  std::string history_dir;
  tr->add_option("--report", history_dir, "write the training report to this directory");

  auto* ev = app.add_subcommand("evaluate", "score candidate audio");
  ev->add_option("-m,--method", method, "spectra|pixels|snn-nc|snn-knn")
      ->required()
      ->check(CLI::IsMember({"spectra", "pixels", "snn-nc", "snn-knn"}));
  ev->add_option("-d,--dataset", dataset_dir, "dataset directory (default: synthesize)");
  ev->add_option("--source", source_dir, "candidate WAV directory (default: simulator)");
  ev->add_option("--model", model, "trained checkpoint (snn-knn) or model directory (snn-nc)");
  ev->add_option("-o,--out", out, "report directory")->required();

  auto* sk = app.add_subcommand("select-k", "elbow selection of the KNN neighbor count");
  sk->add_option("-d,--dataset", dataset_dir, "dataset directory (default: synthesize)");
  sk->add_option("--model", model, "trained checkpoint")->required();
  sk->add_option("-o,--out", out, "report directory")->required();

  auto* pj = app.add_subcommand("project", "t-SNE projection of real and candidate embeddings");
  pj->add_option("-d,--dataset", dataset_dir, "dataset directory (default: synthesize)");
  pj->add_option("--model", model, "trained checkpoint")->required();
  pj->add_option("--source", source_dir, "candidate WAV directory (default: simulator)");
  pj->add_option("-o,--out", out, "report directory")->required();

  auto* rp = app.add_subcommand("report", "merge report fragments and render figures");
  rp->add_option("fragments", fragments, "report.json files or report directories")->required();
  rp->add_option("-o,--out", out, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (g.threads > 0) setenv("SNRGE_THREADS", std::to_string(g.threads).c_str(), 1);

  try {
    ConfigH cfg;
    load_config(g, cfg);

    if (*gen) {
      check(snrge_dataset_generate(cfg, out.c_str()));
      std::printf("wrote %s\n", out.c_str());
    } else if (*sim) {
      DatasetH ds;
      open_or_synthesize(dataset_dir, cfg, ds);
      check(snrge_simulate(ds, cfg, out.c_str()));
      std::printf("wrote %s\n", out.c_str());
    } else if (*tr) {
      if (!per_snr && !all_snr) {
        std::fprintf(stderr, "error: train-embedder needs --per-snr or --all-snr\n");
        return 1;
      }
      DatasetH ds;
      open_or_synthesize(dataset_dir, cfg, ds);
      ReportH history;
      if (all_snr) {
        EmbedderH emb;
        check(snrge_embedder_train_all(ds, cfg, emb.out(), history.out()));
        check(snrge_embedder_save(emb, out.c_str()));
      } else {
        check(snrge_embedder_train_per_snr(ds, cfg, out.c_str(), history.out()));
      }
      std::printf("wrote %s\n", out.c_str());
      if (!history_dir.empty()) write_report(history, history_dir);
    } else if (*ev) {
      const snrge_method m = method == "spectra"  ? SNRGE_METHOD_SPECTRA
                             : method == "pixels" ? SNRGE_METHOD_PIXELS
                             : method == "snn-nc" ? SNRGE_METHOD_SNN_NC
                                                  : SNRGE_METHOD_SNN_KNN;
      DatasetH ds;
      open_or_synthesize(dataset_dir, cfg, ds);
      ReportH r;
      check(snrge_evaluate(ds, cfg, m, opt(source_dir), opt(model), r.out()));
      write_report(r, out);
    } else if (*sk) {
      DatasetH ds;
      open_or_synthesize(dataset_dir, cfg, ds);
      EmbedderH emb;
      check(snrge_embedder_load(model.c_str(), emb.out()));
      ReportH r;
      check(snrge_select_k(ds, emb, cfg, r.out()));
      write_report(r, out);
    } else if (*pj) {
      DatasetH ds;
      open_or_synthesize(dataset_dir, cfg, ds);
      EmbedderH emb;
      check(snrge_embedder_load(model.c_str(), emb.out()));
      ReportH r;
      check(snrge_project(ds, emb, cfg, opt(source_dir), r.out()));
      write_report(r, out);
    } else if (*rp) {
      ReportH merged;
      check(snrge_report_new(merged.out()));
      for (const auto& f : fragments) {
        ReportH part;
        check(snrge_report_load(f.c_str(), part.out()));
        check(snrge_report_merge(merged, part));
      }
      write_report(merged, out);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", snrge_last_error());
    return exit_code(f.status);
  }
  return 0;
}
