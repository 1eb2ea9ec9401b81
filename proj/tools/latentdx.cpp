#include <CLI11.hpp>

#include <iostream>

#include "latentdx/error.hpp"
#include "latentdx/generator.hpp"
#include "latentdx/manifest.hpp"
#include "latentdx/pipeline.hpp"

using namespace latentdx;

namespace {

void add_run(CLI::App* app, RunOptions& run) {
  app->add_option("--out,-o", run.out, "Output directory")->required();
  app->add_flag("--force", run.force, "Allow writing into a non-empty directory");
  app->add_option("--threads", run.threads, "Worker thread cap")->check(CLI::PositiveNumber);
}

void add_cohort(CLI::App* app, CohortPaths& c) {
  app->add_option("--cohort", c.directory, "Directory holding diagnoses.csv, demographics.csv, vocabulary.txt");
  app->add_option("--diagnoses", c.diagnoses, "Diagnoses CSV");
  app->add_option("--demographics", c.demographics, "Demographics CSV");
  app->add_option("--vocabulary", c.vocabulary, "Vocabulary file, one code per line");
}

void add_model(CLI::App* app, ModelOptions& m) {
  app->add_option("--model", m.model, "lda or pdm")->check(CLI::IsMember({"lda", "pdm"}));
  app->add_option("--k", m.k, "Number of topics");
  app->add_option("--alpha", m.alpha, "Theta concentration (default: lda 50/K, pdm 1)");
  app->add_option("--beta", m.beta, "Phi concentration (default: lda 0.01, pdm 1)");
  app->add_option("--xi", m.xi, "Gamma prior shape (pdm)");
  app->add_option("--delta", m.delta, "Gamma prior scale (pdm)");
  app->add_option("--proposal-concentration", m.proposal_concentration, "Initial phi proposal concentration (pdm)");
  app->add_option("--phi-steps", m.phi_steps, "MH steps per phi row per sweep (pdm)");
  app->add_flag("--diagnosed-only", m.diagnosed_only, "PDM likelihood over diagnosed pairs only");
  app->add_option("--chains", m.chains, "Independent chains");
  app->add_option("--burnin", m.burn_in, "Burn-in sweeps per chain");
  app->add_option("--samples", m.samples, "Retained sweeps per chain");
  app->add_option("--thin", m.thin, "Thinning interval");
}

void add_clustering(CLI::App* app, std::vector<std::string>& algorithms, std::size_t& min_groups,
                    std::size_t& max_groups, std::size_t& branching, double& threshold) {
  app->add_option("--algorithms", algorithms, "hierarchical, kmeans, birch")->delimiter(',');
  app->add_option("--min-groups", min_groups, "Smallest number of subgroups");
  app->add_option("--max-groups", max_groups, "Largest number of subgroups");
  app->add_option("--branching-factor", branching, "BIRCH branching factor");
  app->add_option("--birch-threshold", threshold, "BIRCH leaf radius (0: data-driven)");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent disease clusters and patient subgroups from diagnosis counts"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.require_subcommand(1);

  // generate
  GenerateOptions gen;
  GeneratorConfig gflags;
  auto* g = app.add_subcommand("generate", "Simulate a synthetic cohort with ground truth");
  add_run(g, gen.run);
  g->add_option("--preset", gen.preset, "osteoporosis, dementia or copd")
      ->check(CLI::IsMember({"osteoporosis", "dementia", "copd"}));
  g->add_option("--seed", gflags.seed, "Master seed")->required();
  auto* g_m = g->add_option("--m", gflags.patients, "Patients");
  auto* g_v = g->add_option("--v", gflags.vocabulary_size, "Vocabulary size");
  auto* g_k = g->add_option("--k", gflags.clusters, "Latent clusters");
  auto* g_alpha = g->add_option("--alpha", gflags.alpha, "Theta concentration");
  auto* g_beta = g->add_option("--beta", gflags.beta, "Phi concentration");
  auto* g_female = g->add_option("--female-fraction", gflags.female_fraction, "Share of female patients");
  auto* g_mean = g->add_option("--mean-diagnoses", gflags.target_mean_diagnoses, "Mean diagnoses per patient");
  auto* g_slope = g->add_option("--age-slope", gflags.age_slope, "Baseline log-rate slope per year of age");
  auto* g_split = g->add_flag("--age-slope-split", gflags.age_slope_split, "Alternate slope sign across codes");
  auto* g_lda = g->add_flag("--lda-mode", gflags.lda_mode, "Multinomial token generation");
  auto* g_block = g->add_flag("--block-topics", gflags.block_topics, "Topics on disjoint code blocks");
  auto* g_pure = g->add_flag("--pure-patients", gflags.pure_patients, "One cluster per patient");
  auto* g_index = g->add_option("--index-code", gflags.index_code, "Index diagnosis code");

  // rates
  RatesOptions rates;
  auto* r = app.add_subcommand("rates", "Fit age/sex rate curves and expected counts");
  add_run(r, rates.run);
  add_cohort(r, rates.cohort);
  r->add_option("--df", rates.df, "Spline degrees of freedom");
  r->add_option("--rates-file", rates.rates_file, "Rate table code,sex,age,rate_per_person_year");

  // fit
  FitOptions fit;
  auto* f = app.add_subcommand("fit", "Fit LDA or PDM by MCMC");
  add_run(f, fit.run);
  add_cohort(f, fit.cohort);
  add_model(f, fit.model);
  f->add_option("--seed", fit.seed, "Master seed")->required();
  f->add_option("--expected", fit.expected, "expected.csv written by `rates`");
  f->add_option("--rates-file", fit.rates_file, "Rate table instead of --expected");

  // posterior
  PosteriorOptions post;
  auto* p = app.add_subcommand("posterior", "Patient-by-topic posterior weights");
  add_run(p, post.run);
  add_cohort(p, post.cohort);
  p->add_option("--fit", post.fit, "Directory written by `fit`")->required();
  p->add_option("--expected", post.expected, "expected.csv written by `rates` (pdm)");
  p->add_option("--rates-file", post.rates_file, "Rate table instead of --expected");

  // cluster
  ClusterOptions clus;
  auto* c = app.add_subcommand("cluster", "Subgroup sweep over algorithms and G");
  add_run(c, clus.run);
  add_cohort(c, clus.cohort);
  c->add_option("--features", clus.features, "posterior.csv or theta.csv")->required();
  c->add_option("--seed", clus.seed, "Seed");
  add_clustering(c, clus.algorithms, clus.min_groups, clus.max_groups, clus.branching_factor,
                 clus.birch_threshold);

  // survive
  SurviveOptions surv;
  auto* s = app.add_subcommand("survive", "Log-rank p-value grid and Kaplan-Meier curves");
  add_run(s, surv.run);
  add_cohort(s, surv.cohort);
  s->add_option("--assignments", surv.assignments, "assignments.csv written by `cluster`")->required();
  s->add_option("--algorithm", surv.algorithm, "Subgrouping to plot (default: smallest p)");
  s->add_option("--groups", surv.groups, "G of the subgrouping to plot");

  // eci
  EciOptions eci;
  auto* e = app.add_subcommand("eci", "Comorbidity profiles and subgroup reports");
  add_run(e, eci.run);
  add_cohort(e, eci.cohort);
  e->add_option("--assignments", eci.assignments, "assignments.csv written by `cluster`")->required();
  e->add_option("--algorithm", eci.algorithm, "Subgrouping to report (default: smallest log-rank p)");
  e->add_option("--groups", eci.groups, "G of the subgrouping to report");
  e->add_option("--mapping", eci.mapping, "code,category ECI mapping");

  // embed
  EmbedOptions emb;
  auto* m = app.add_subcommand("embed", "t-SNE of disease columns of phi");
  add_run(m, emb.run);
  add_cohort(m, emb.cohort);
  m->add_option("--fit", emb.fit, "Directory written by `fit`")->required();
  m->add_option("--perplexity", emb.perplexity, "Perplexity (default: pdm 10, lda 20)");
  m->add_option("--tsne-iters", emb.iterations, "Iterations");
  m->add_option("--learning-rate", emb.learning_rate, "Step size");
  m->add_option("--seed", emb.seed, "Seed");

  // pipeline
  PipelineOptions pipe;
  auto* pl = app.add_subcommand("pipeline", "rates, fit, posterior, sweep, survival, reports, embedding");
  add_run(pl, pipe.run);
  add_cohort(pl, pipe.cohort);
  add_model(pl, pipe.model);
  pl->add_option("--seed", pipe.seed, "Master seed");
  pl->add_option("--df", pipe.df, "Spline degrees of freedom");
  pl->add_option("--rates-file", pipe.rates_file, "Rate table instead of fitting");
  pl->add_option("--features", pipe.features, "posterior or theta")->check(CLI::IsMember({"posterior", "theta"}));
  add_clustering(pl, pipe.algorithms, pipe.min_groups, pipe.max_groups, pipe.branching_factor,
                 pipe.birch_threshold);
  pl->add_option("--eci-mapping", pipe.eci_mapping, "code,category ECI mapping");
  pl->add_option("--perplexity", pipe.perplexity, "t-SNE perplexity (default: pdm 10, lda 20)");
  pl->add_option("--tsne-iters", pipe.tsne_iterations, "t-SNE iterations");

  // replay
  std::string replay_manifest, replay_out;
  bool replay_force = false;
  auto* rp = app.add_subcommand("replay", "Re-run a manifest and compare output digests");
  rp->add_option("manifest", replay_manifest, "manifest.json")->required();
  rp->add_option("--out,-o", replay_out, "Output directory (default: the manifest's own)");
  rp->add_flag("--force", replay_force, "Allow writing into a non-empty directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) {
      gen.generator = gen.preset.empty() ? GeneratorConfig{} : preset_config(gen.preset);
      gen.generator.seed = gflags.seed;
      auto& t = gen.generator;
      if (g_m->count()) t.patients = gflags.patients;
      if (g_v->count()) t.vocabulary_size = gflags.vocabulary_size;
      if (g_k->count()) t.clusters = gflags.clusters;
      if (g_alpha->count()) t.alpha = gflags.alpha;
      if (g_beta->count()) t.beta = gflags.beta;
      if (g_female->count()) t.female_fraction = gflags.female_fraction;
      if (g_mean->count()) t.target_mean_diagnoses = gflags.target_mean_diagnoses;
      if (g_slope->count()) t.age_slope = gflags.age_slope;
      if (g_split->count()) t.age_slope_split = gflags.age_slope_split;
      if (g_lda->count()) t.lda_mode = gflags.lda_mode;
      if (g_block->count()) t.block_topics = gflags.block_topics;
      if (g_pure->count()) t.pure_patients = gflags.pure_patients;
      if (g_index->count()) t.index_code = gflags.index_code;
      run_generate(gen);
    } else if (r->parsed()) {
      run_rates(rates);
    } else if (f->parsed()) {
      run_fit(fit);
    } else if (p->parsed()) {
      run_posterior(post);
    } else if (c->parsed()) {
      run_cluster(clus);
    } else if (s->parsed()) {
      run_survive(surv);
    } else if (e->parsed()) {
      run_eci(eci);
    } else if (m->parsed()) {
      run_embed(emb);
    } else if (pl->parsed()) {
      run_pipeline(pipe);
    } else if (rp->parsed()) {
      const auto mismatched = run_replay(replay_manifest, replay_out, replay_force);
      if (!mismatched.empty()) {
        for (const auto& name : mismatched) std::cerr << "digest mismatch: " << name << "\n";
        return 4;
      }
      std::cout << "replay reproduced every output digest\n";
    }
  } catch (const std::exception& err) {
    std::cerr << "latentdx: " << err.what() << "\n";
    return exit_code_for(err);
  }
  return 0;
}
