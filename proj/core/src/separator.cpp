// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/separator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ttr/errors.hpp"
#include "ttr/rng.hpp"

namespace ttr {
namespace {

constexpr double kTrainStabilizer = 1e-8;
constexpr double kLog10 = 2.302585092994045684;

ad::Matrix fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                          std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng(seed);
  ad::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

int frame_count(Eigen::Index n, const SeparatorHyperparams& hp) {
  return static_cast<int>((n - hp.kernel) / hp.stride) + 1;
}

}  // namespace

void validate(const SeparatorHyperparams& hp) {
  if (hp.num_filters < 1 || hp.blocks < 1 || hp.channels < 1)
    throw ConfigError("separator: widths must be >= 1");
  if (hp.kernel < 1 || hp.stride < 1) throw ConfigError("separator: bad kernel/stride");
  if (hp.num_sources < 1 || hp.num_sources > 4)
    throw ConfigError("separator: num_sources must be in [1, 4]");
}

void init_separator_params(ParamStore& store, const SeparatorHyperparams& hp, std::uint64_t seed) {
  validate(hp);
  store.add("sep.encoder.w", fan_in_uniform(hp.num_filters, hp.kernel, hp.kernel,
                                            derive_seed(seed, "sep.encoder.w")));
  store.add("sep.inproj.w", fan_in_uniform(hp.channels, hp.num_filters, hp.num_filters,
                                           derive_seed(seed, "sep.inproj.w")));
  store.add("sep.inproj.b",
            fan_in_uniform(hp.channels, 1, hp.num_filters, derive_seed(seed, "sep.inproj.b")));
  for (int b = 0; b < hp.blocks; ++b) {
    const std::string name = "sep.block" + std::to_string(b);
    store.add(name + ".w", fan_in_uniform(hp.channels, hp.channels * 3, hp.channels * 3,
                                          derive_seed(seed, name + ".w")));
    store.add(name + ".b",
              fan_in_uniform(hp.channels, 1, hp.channels * 3, derive_seed(seed, name + ".b")));
  }
  store.add("sep.head.w", fan_in_uniform(hp.num_sources * hp.num_filters, hp.channels, hp.channels,
                                         derive_seed(seed, "sep.head.w")));
  store.add("sep.head.b", fan_in_uniform(hp.num_sources * hp.num_filters, 1, hp.channels,
                                         derive_seed(seed, "sep.head.b")));
  store.add("sep.decoder.w", fan_in_uniform(hp.num_filters, hp.kernel, hp.num_filters,
                                            derive_seed(seed, "sep.decoder.w")));
}

std::vector<ad::Var> separate_t(ad::Tape& t, const BoundParams& p, const SeparatorHyperparams& hp,
                                ad::Var x) {
  const Eigen::Index n = t.val(x).rows();
  if (t.val(x).cols() != 1) throw std::invalid_argument("separate: input must be Nx1");
  if (n < hp.kernel)
    throw std::invalid_argument("separate: input shorter than the analysis kernel");

  const int frames = frame_count(n, hp);
  ad::Var segs = t.frame_signal(x, hp.kernel, hp.stride, frames);
  ad::Var feats = t.matmul(p["sep.encoder.w"], segs);  // F x P, bias-free

  ad::Var h = t.broadcast_add_col(t.matmul(p["sep.inproj.w"], feats), p["sep.inproj.b"]);
  for (int b = 0; b < hp.blocks; ++b) {
    const std::string name = "sep.block" + std::to_string(b);
    ad::Var conv = t.broadcast_add_col(t.matmul(p[name + ".w"], t.im2col(h, 3, 1 << b)),
                                       p[name + ".b"]);
    h = t.add(h, t.tanh_(conv));
  }
  ad::Var masks = t.sigmoid(t.broadcast_add_col(t.matmul(p["sep.head.w"], h), p["sep.head.b"]));

  std::vector<ad::Var> out;
  out.reserve(static_cast<std::size_t>(hp.num_sources));
  for (int k = 0; k < hp.num_sources; ++k) {
    ad::Var mask = t.rows(masks, k * hp.num_filters, hp.num_filters);
    ad::Var masked = t.mul(mask, feats);
    ad::Var synth = t.matmul(t.transpose(p["sep.decoder.w"]), masked);  // kernel x P
    out.push_back(t.overlap_add(synth, hp.stride, static_cast<int>(n)));
  }
  return out;
}

std::vector<Waveform> separate(ParamStore& store, const SeparatorHyperparams& hp,
                               const Waveform& x) {
  validate(x, "separate");
  ad::Tape t;
  BoundParams p(t, store);
  const auto outs = separate_t(t, p, hp, t.constant(to_column(x)));
  std::vector<Waveform> waves;
  waves.reserve(outs.size());
  for (ad::Var v : outs) {
    Waveform w;
    w.sample_rate = x.sample_rate;
    const ad::Matrix& m = t.val(v);
    w.samples.assign(m.data(), m.data() + m.rows());
    waves.push_back(std::move(w));
  }
  return waves;
}

ad::Var neg_si_sdr_t(ad::Tape& t, ad::Var reference, ad::Var estimate) {
  if (t.val(reference).rows() != t.val(estimate).rows())
    throw std::invalid_argument("neg_si_sdr_t: length mismatch");
  ad::Var dot = t.sum_all(t.mul(estimate, reference));
  ad::Var ref_energy = t.sum_all(t.mul(reference, reference));
  if (t.val(ref_energy)(0, 0) == 0.0)
    throw std::domain_error("neg_si_sdr_t: reference is identically zero");
  ad::Var alpha = t.cdiv(dot, ref_energy);
  ad::Var scaled = t.smul(alpha, reference);
  ad::Var num = t.sum_all(t.mul(scaled, scaled));
  ad::Var resid = t.sub(scaled, estimate);
  ad::Var den = t.sum_all(t.mul(resid, resid));
  // Cap rule as in the metric; constant beyond the cap, so no gradient there.
  if (t.val(den)(0, 0) < kSiSdrResidualFloor * t.val(num)(0, 0)) {
    ad::Matrix cap(1, 1);
    cap(0, 0) = -kSiSdrCapDb;
    return t.constant(cap);
  }
  ad::Var ratio = t.cdiv(num, t.add_scalar(den, kTrainStabilizer));
  return t.scale(t.log_(ratio), -10.0 / kLog10);
}

PitVarResult pit_loss_t(ad::Tape& t, const std::vector<ad::Var>& references,
                        const std::vector<ad::Var>& estimates) {
  const std::size_t k = references.size();
  if (k == 0 || estimates.size() != k) throw std::invalid_argument("pit_loss_t: K mismatch");
  if (k > 4) throw std::invalid_argument("pit_loss_t: K > 4 unsupported");

  std::vector<std::vector<ad::Var>> pair_terms(k, std::vector<ad::Var>(k));
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t e = 0; e < k; ++e)
      pair_terms[r][e] = neg_si_sdr_t(t, references[r], estimates[e]);

  std::vector<int> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = static_cast<int>(i);
  std::vector<int> best_perm;
  double best = std::numeric_limits<double>::infinity();
  do {
    double loss = 0.0;
    for (std::size_t r = 0; r < k; ++r)
      loss += t.val(pair_terms[r][static_cast<std::size_t>(perm[r])])(0, 0);
    if (loss < best) {
      best = loss;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  ad::Var total = pair_terms[0][static_cast<std::size_t>(best_perm[0])];
  for (std::size_t r = 1; r < k; ++r)
    total = t.add(total, pair_terms[r][static_cast<std::size_t>(best_perm[r])]);
  return {total, best_perm};
}

SeparatorItem make_separator_item(const LoadedInstance& inst) {
  SeparatorItem item;
  item.id = inst.id;
  item.mixture = inst.mixture;
  item.references = inst.sources;
  item.transcripts = inst.transcripts;
  item.mixture_col = to_column(inst.mixture);
  for (const auto& s : inst.sources) item.reference_cols.push_back(to_column(s));
  return item;
}

SeparatorItem make_finetune_item(const LoadedInstance& inst, const Encoders& encoders,
                                 const Lexicon& lexicon) {
  SeparatorItem item = make_separator_item(inst);
  const int frames = encoders.audio_frame_count(inst.mixture.samples.size());
  for (const auto& transcript : inst.transcripts) {
    const SubwordSequence tokens = tokenize_transcript(transcript, lexicon);
    item.aligns.push_back(
        align(transcript, tokens.per_word_counts, frames, encoders.config().frame_rate));
    item.texts.push_back(encoders.text_encode(tokens).values);
  }
  return item;
}

TotalLossVar total_loss_t(ad::Tape& t, const std::vector<ad::Var>& estimates,
                          const SeparatorItem& item, const BoundParams& summarizer_params,
                          const SummarizerHyperparams& sum_hp, const Encoders& encoders,
                          double lambda) {
  if (estimates.size() != item.reference_cols.size())
    throw std::invalid_argument("total_loss: estimate/reference K mismatch");
  if (lambda > 0.0 && item.texts.size() != item.reference_cols.size())
    throw std::invalid_argument("total_loss: transcript/source mismatch");
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");

  std::vector<ad::Var> refs;
  refs.reserve(item.reference_cols.size());
  for (const auto& r : item.reference_cols) refs.push_back(t.constant(r));

  PitVarResult pit = pit_loss_t(t, refs, estimates);

  TotalLossVar out;
  out.value.permutation = pit.permutation;
  out.value.pit_term = t.val(pit.loss)(0, 0);

  if (lambda == 0.0) {
    out.total = pit.loss;
    out.value.total = out.value.pit_term;
    return out;
  }

  // Estimate paired with reference k provides the audio for transcript k.
  ad::Var ttr_sum;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    ad::Var est = estimates[static_cast<std::size_t>(pit.permutation[k])];
    ad::Var audio = encoders.audio_encode_t(t, est);
    ad::Var s_bar = summarizer_apply(t, summarizer_params, sum_hp, audio, item.aligns[k]);
    ad::Var lk = ttr_loss_t(t, s_bar, t.constant(item.texts[k]));
    out.value.per_source_ttr.push_back(t.val(lk)(0, 0));
    ttr_sum = k == 0 ? lk : t.add(ttr_sum, lk);
  }
  out.value.ttr_sum = t.val(ttr_sum)(0, 0);
  out.total = t.add(pit.loss, t.scale(ttr_sum, lambda));
  out.value.total = t.val(out.total)(0, 0);
  return out;
}

TotalLossValue total_loss(const std::vector<Waveform>& estimates, const SeparatorItem& item,
                          ParamStore& summarizer_store, const SummarizerHyperparams& sum_hp,
                          const Encoders& encoders, double lambda) {
  ad::Tape t;
  BoundParams p(t, summarizer_store);
  std::vector<ad::Var> est_vars;
  est_vars.reserve(estimates.size());
  for (const auto& e : estimates) est_vars.push_back(t.constant(to_column(e)));
  return total_loss_t(t, est_vars, item, p, sum_hp, encoders, lambda).value;
}

TrainHistory pretrain_separator(ParamStore& sep, const SeparatorHyperparams& hp,
                                const std::vector<SeparatorItem>& train,
                                const std::vector<SeparatorItem>& validation,
                                const OptimizerConfig& opt, std::uint64_t shuffle_seed,
                                LossLog* log,
                                std::function<void(int, double, double, double)> on_epoch) {
  if (train.empty()) throw std::invalid_argument("pretrain_separator: empty dataset");
  if (validation.empty()) throw std::invalid_argument("pretrain_separator: empty validation set");

  const auto instance_loss = [&](const SeparatorItem& item, bool want_grads) {
    ad::Tape t;
    BoundParams p(t, sep);
    const auto estimates = separate_t(t, p, hp, t.constant(item.mixture_col));
    std::vector<ad::Var> refs;
    refs.reserve(item.reference_cols.size());
    for (const auto& r : item.reference_cols) refs.push_back(t.constant(r));
    PitVarResult pit = pit_loss_t(t, refs, estimates);
    ad::check_finite(t, pit.loss, "pretrain_separator");
    if (want_grads) {
      t.backward(pit.loss);
      p.flush_grads();
    }
    return t.val(pit.loss)(0, 0);
  };

  TrainLoop loop;
  loop.train_size = train.size();
  loop.validation_size = validation.size();
  loop.train_item = [&](std::size_t i) { return instance_loss(train[i], true); };
  loop.validate_item = [&](std::size_t i) { return instance_loss(validation[i], false); };
  loop.on_epoch = [&](int epoch, double train_loss, double val_loss, double lr) {
    if (log) log->record(epoch, "validation_si_sdri", mean_si_sdr_improvement(sep, hp, validation), lr);
    if (on_epoch) on_epoch(epoch, train_loss, val_loss, lr);
  };
  return run_training(sep, opt, loop, shuffle_seed, log);
}

TrainHistory finetune_ttr(ParamStore& sep, const SeparatorHyperparams& sep_hp,
                          ParamStore& summarizer_store, const SummarizerHyperparams& sum_hp,
                          const Encoders& encoders, const std::vector<SeparatorItem>& train,
                          const std::vector<SeparatorItem>& validation, double lambda,
                          bool freeze_summarizer, const OptimizerConfig& opt,
                          std::uint64_t shuffle_seed, LossLog* log,
                          std::function<void(int, double, double, double)> on_epoch) {
  if (train.empty()) throw std::invalid_argument("finetune_ttr: empty dataset");
  if (validation.empty()) throw std::invalid_argument("finetune_ttr: empty validation set");
  for (const auto& item : train)
    if (!item.has_ttr_context() && lambda > 0.0)
      throw std::invalid_argument("finetune_ttr: items lack transcripts/text embeddings");

  summarizer_store.freeze_all(freeze_summarizer);

  const auto instance_loss = [&](const SeparatorItem& item, bool want_grads) {
    ad::Tape t;
    BoundParams sep_p(t, sep);
    BoundParams sum_p(t, summarizer_store);
    const auto estimates = separate_t(t, sep_p, sep_hp, t.constant(item.mixture_col));
    TotalLossVar loss = total_loss_t(t, estimates, item, sum_p, sum_hp, encoders, lambda);
    ad::check_finite(t, loss.total, "finetune_ttr");
    if (want_grads) {
      t.backward(loss.total);
      sep_p.flush_grads();
      if (!freeze_summarizer) sum_p.flush_grads();
    }
    return loss.value.total;
  };

  TrainLoop loop;
  loop.train_size = train.size();
  loop.validation_size = validation.size();
  loop.train_item = [&](std::size_t i) { return instance_loss(train[i], true); };
  loop.validate_item = [&](std::size_t i) { return instance_loss(validation[i], false); };
  loop.on_epoch = [&](int epoch, double train_loss, double val_loss, double lr) {
    if (log)
      log->record(epoch, "validation_si_sdri", mean_si_sdr_improvement(sep, sep_hp, validation),
                  lr);
    if (on_epoch) on_epoch(epoch, train_loss, val_loss, lr);
  };
  return run_training({&sep, &summarizer_store}, opt, loop, shuffle_seed, log);
}

double mean_si_sdr_improvement(ParamStore& sep, const SeparatorHyperparams& hp,
                               const std::vector<SeparatorItem>& items) {
  if (items.empty()) throw std::invalid_argument("mean_si_sdr_improvement: empty set");
  double total = 0.0;
  for (const auto& item : items) {
    const auto estimates = separate(sep, hp, item.mixture);
    const PitResult pit = pit_loss(item.references, estimates);
    double inst = 0.0;
    for (std::size_t k = 0; k < item.references.size(); ++k)
      inst += pit.per_pair_si_sdr[k] - si_sdr(item.references[k], item.mixture);
    total += inst / static_cast<double>(item.references.size());
  }
  return total / static_cast<double>(items.size());
}

double mean_ttr_on_estimates(ParamStore& sep, const SeparatorHyperparams& hp,
                             ParamStore& summarizer_store, const SummarizerHyperparams& sum_hp,
                             const Encoders& encoders, const std::vector<SeparatorItem>& items) {
  if (items.empty()) throw std::invalid_argument("mean_ttr_on_estimates: empty set");
  double total = 0.0;
  for (const auto& item : items) {
    const auto estimates = separate(sep, hp, item.mixture);
    const TotalLossValue v = total_loss(estimates, item, summarizer_store, sum_hp, encoders, 1.0);
    total += v.ttr_sum / static_cast<double>(item.references.size());
  }
  return total / static_cast<double>(items.size());
}

}  // namespace ttr
