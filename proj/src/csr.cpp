#include "dmlcsr/csr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dmlcsr/checkpoint.hpp"
#include "dmlcsr/rng.hpp"

namespace dmlcsr::csr {

// ---------------------------------------------------------------------------
// WeightRecord

WeightRecord WeightRecord::from_model(model::DmlCsrNet& net) {
  WeightRecord r;
  for (const model::ParamRef& p : net.state())
    r.entries.push_back({p.name, p.shape, p.bn_stat, *p.data});
  return r;
}

void WeightRecord::to_model(model::DmlCsrNet& net) const {
  const std::vector<model::ParamRef> refs = net.state();
  if (refs.size() != entries.size())
    throw std::invalid_argument("WeightRecord: entry count mismatch with model");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].name != entries[i].name ||
        refs[i].data->size() != entries[i].values.size())
      throw std::invalid_argument("WeightRecord: mismatch at " + entries[i].name);
    *refs[i].data = entries[i].values;
  }
}

void WeightRecord::to_model_partial(model::DmlCsrNet& net) const {
  for (const model::ParamRef& p : net.state()) {
    const WeightEntry* e = nullptr;
    for (const WeightEntry& cand : entries)
      if (cand.name == p.name) {
        e = &cand;
        break;
      }
    if (!e || e->values.size() != p.data->size())
      throw std::invalid_argument("WeightRecord: checkpoint missing array " + p.name);
    *p.data = e->values;
  }
}

bool WeightRecord::same_layout(const WeightRecord& o) const {
  if (entries.size() != o.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name != o.entries[i].name ||
        entries[i].values.size() != o.entries[i].values.size())
      return false;
  return true;
}

WeightRecord self_ensemble(const WeightRecord& best,
                           const std::vector<WeightRecord>& models, int k) {
  if (k < 1) throw std::invalid_argument("self_ensemble: k must be >= 1");
  if (models.empty()) throw std::invalid_argument("self_ensemble: no models");
  for (const WeightRecord& m : models)
    if (!m.same_layout(best))
      throw std::invalid_argument("self_ensemble: record layout mismatch");

  const double cb = static_cast<double>(k) / (k + 1);
  const double cm = 1.0 / (static_cast<double>(k + 1) * models.size());

  WeightRecord out = best;
  for (std::size_t e = 0; e < out.entries.size(); ++e) {
    WeightEntry& dst = out.entries[e];
    if (dst.bn_stat) continue;  // statistics are re-estimated, not averaged
    for (std::size_t i = 0; i < dst.values.size(); ++i) {
      double acc = 0.0;
      for (const WeightRecord& m : models) acc += m.entries[e].values[i];
      dst.values[i] = static_cast<float>(cb * best.entries[e].values[i] + cm * acc);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// batching helpers

namespace {

void fill_images(Tensor& images, const std::vector<const data::LabeledSample*>& batch) {
  const int B = static_cast<int>(batch.size());
  const data::LabeledSample& first = *batch.front();
  images.resize(B, 3, first.image.h, first.image.w);
  const std::size_t sz = static_cast<std::size_t>(3) * first.image.plane();
  for (int i = 0; i < B; ++i)
    std::copy(batch[i]->image.data(), batch[i]->image.data() + sz, images.sample(i));
}

void fill_labels(LabelBatch& labels, const std::vector<const data::LabeledSample*>& batch) {
  const int B = static_cast<int>(batch.size());
  const data::LabeledSample& first = *batch.front();
  labels = LabelBatch(B, first.labels.h, first.labels.w);
  for (int i = 0; i < B; ++i) labels.set(i, batch[i]->labels);
}

LabelMap argmax_map(const Tensor& logits, int sample) {
  LabelMap m(logits.h, logits.w);
  const int hw = logits.plane();
  for (int p = 0; p < hw; ++p) {
    int best = 0;
    float bv = logits.chan(sample, 0)[p];
    for (int c = 1; c < logits.c; ++c) {
      const float v = logits.chan(sample, c)[p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    m.v[p] = static_cast<std::uint8_t>(best);
  }
  return m;
}

Tensor sigmoid_tensor(const Tensor& z) {
  Tensor s;
  s.resize_like(z);
  for (std::size_t i = 0; i < z.size(); ++i)
    s.v[i] = 1.0f / (1.0f + std::exp(-z.v[i]));
  return s;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void recalibrate_bn(WeightRecord& weights, model::DmlCsrNet& net, const Dataset& data,
                    int batch_size) {
  if (data.samples.empty())
    throw std::invalid_argument("recalibrate_bn: empty dataset");
  weights.to_model(net);
  net.begin_bn_accumulate();
  const int n = static_cast<int>(data.samples.size());
  Tensor images;
  for (int begin = 0; begin < n; begin += batch_size) {
    const int count = std::min(batch_size, n - begin);
    std::vector<const data::LabeledSample*> batch(count);
    for (int i = 0; i < count; ++i) batch[i] = &data.samples[begin + i];
    fill_images(images, batch);
    net.forward(images, model::RunMode::Train, model::BnMode::Accumulate);
  }
  net.finalize_bn_accumulate();
  weights = WeightRecord::from_model(net);
}

losses::TeacherTargets distill_targets(model::DmlCsrNet& teacher, const Tensor& images) {
  model::NetworkOutputs out =
      teacher.forward(images, model::RunMode::Train, model::BnMode::Eval);
  losses::TeacherTargets t;
  t.parse_probs = losses::softmax(out.parsing_logits);
  if (out.has_edges) {
    t.binary_probs = losses::softmax(out.binary_edge_logits);
    t.category_probs = sigmoid_tensor(out.category_edge_logits);
  }
  return t;
}

EvalResult evaluate(model::DmlCsrNet& net, const Dataset& ds, int batch_size,
                    const std::vector<std::vector<int>>& groups) {
  EvalResult r;
  r.cm = metrics::ConfusionMatrix(ds.num_classes);
  const int n = static_cast<int>(ds.samples.size());
  Tensor images;
  for (int begin = 0; begin < n; begin += batch_size) {
    const int count = std::min(batch_size, n - begin);
    std::vector<const data::LabeledSample*> batch(count);
    for (int i = 0; i < count; ++i) batch[i] = &ds.samples[begin + i];
    fill_images(images, batch);
    model::NetworkOutputs out =
        net.forward(images, model::RunMode::Infer, model::BnMode::Eval);
    for (int i = 0; i < count; ++i) {
      LabelMap pred = argmax_map(out.parsing_logits, i);
      metrics::accumulate(r.cm, pred, ds.samples[begin + i].labels);
    }
  }
  r.mean_f1 = metrics::mean_f1(r.cm);
  r.mean_iou = metrics::mean_iou(r.cm);
  r.per_class = metrics::per_class_f1(r.cm);
  r.overall_f1 = groups.empty() ? 0.0 : metrics::overall_f1(r.cm, groups);
  return r;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

struct StepLosses {
  double total = 0;
  losses::DmlBreakdown dml;
  losses::CsrBreakdown csr;
  bool has_csr = false;
};

StepLosses train_step(model::DmlCsrNet& net, nn::Sgd& sgd,
                      const std::vector<model::ParamRef>& params, const Tensor& images,
                      const LabelBatch& labels, const losses::EdgeBatch& edges,
                      const losses::TeacherTargets* teacher, bool use_gt,
                      const losses::LossWeights& w, double lr) {
  net.zero_grad();
  model::NetworkOutputs out =
      net.forward(images, model::RunMode::Train, model::BnMode::Train);

  Tensor dparse(out.parsing_logits.n, out.parsing_logits.c, out.parsing_logits.h,
                out.parsing_logits.w);
  Tensor dbin, dcat;
  if (out.has_edges) {
    dbin.resize_like(out.binary_edge_logits);
    dcat.resize_like(out.category_edge_logits);
  }

  losses::Outputs lo;
  lo.parse = &out.parsing_logits;
  lo.binary = out.has_edges ? &out.binary_edge_logits : nullptr;
  lo.category = out.has_edges ? &out.category_edge_logits : nullptr;

  StepLosses sl;
  if (use_gt) {
    sl.dml = losses::dml_loss(lo, labels, edges, w, &dparse,
                              out.has_edges ? &dbin : nullptr,
                              out.has_edges ? &dcat : nullptr);
    sl.total += sl.dml.total;
  }
  if (teacher) {
    sl.csr = losses::csr_loss(lo, *teacher, w, &dparse, out.has_edges ? &dbin : nullptr,
                              out.has_edges ? &dcat : nullptr);
    sl.total += sl.csr.total;
    sl.has_csr = true;
  }
  if (!std::isfinite(sl.total))
    throw TrainDiverged("loss is not finite (lr=" + fmt_double(lr) + ")");

  net.backward(dparse, out.has_edges ? &dbin : nullptr, out.has_edges ? &dcat : nullptr);
  sgd.step(params, lr);
  return sl;
}

struct TargetCache {
  bool valid = false;
  Tensor parse, binary, category;  // (num_samples, C, H, W)
};

void gather_targets(const TargetCache& cache, const std::vector<int>& idx, int begin,
                    int count, losses::TeacherTargets& out) {
  auto gather = [&](const Tensor& src, Tensor& dst) {
    if (src.n == 0) return;
    dst.resize(count, src.c, src.h, src.w);
    const std::size_t sz = static_cast<std::size_t>(src.c) * src.plane();
    for (int i = 0; i < count; ++i)
      std::copy(src.sample(idx[begin + i]), src.sample(idx[begin + i]) + sz,
                dst.sample(i));
  };
  gather(cache.parse, out.parse_probs);
  gather(cache.binary, out.binary_probs);
  gather(cache.category, out.category_probs);
}

}  // namespace

TrainResult run_training(model::DmlCsrNet& net, const Dataset& train, const Dataset& val,
                         const TrainOptions& opt, std::ostream* live_log) {
  if (train.samples.empty() || val.samples.empty())
    throw std::invalid_argument("run_training: empty dataset");
  opt.loss.validate(train.num_classes);
  if (opt.batch_size < 1) throw std::invalid_argument("run_training: bad batch size");

  const int n_train = static_cast<int>(train.samples.size());
  const int B = opt.batch_size;
  const int steps_per_epoch = (n_train + B - 1) / B;

  model::DmlCsrNet aux(net.config(), opt.seed + 1);  // teacher / eval / recalib duties
  nn::Sgd sgd;
  sgd.momentum = opt.momentum;
  sgd.weight_decay = opt.weight_decay;
  const std::vector<model::ParamRef> params = net.parameters();

  TrainResult result;
  auto log_line = [&](const std::string& s) {
    result.log_lines.push_back(s);
    if (live_log) (*live_log) << s << "\n";
  };

  auto eval_record = [&](const WeightRecord& rec) {
    rec.to_model(aux);
    return evaluate(aux, val, B, opt.eval_groups);
  };

  // one epoch over shuffled batches; logs one JSON object and returns the eval
  auto run_epoch = [&](int phase, int cycle, int epoch_in_phase, std::uint64_t shuffle_tag,
                       bool augment, const TargetCache* cache,
                       const WeightRecord* teacher_rec, bool use_gt,
                       auto lr_of_step) -> EvalResult {
    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;
    Rng shuffle_rng(seed_stream(opt.seed, 0x73687566 /* "shuf" */, shuffle_tag));
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    const bool teacher_per_batch = teacher_rec && !cache;
    if (teacher_per_batch) teacher_rec->to_model(aux);

    double sum_total = 0, sum_ce = 0, sum_lov = 0, sum_bce = 0, sum_cce = 0,
           sum_ba = 0, sum_ca = 0, sum_klp = 0, sum_klb = 0, sum_klc = 0;
    double last_lr = 0;
    std::vector<data::LabeledSample> holder(B);
    Tensor images;
    LabelBatch labels;

    for (int s = 0; s < steps_per_epoch; ++s) {
      const int begin = s * B;
      const int count = std::min(B, n_train - begin);
      std::vector<const data::LabeledSample*> batch(count);
      for (int i = 0; i < count; ++i) {
        const data::LabeledSample& base = train.samples[order[begin + i]];
        if (augment) {
          holder[i] = data::augment(
              base, seed_stream(opt.seed, 0x617567 /* "aug" */, shuffle_tag,
                                static_cast<std::uint64_t>(order[begin + i])));
          batch[i] = &holder[i];
        } else {
          batch[i] = &base;
        }
      }
      fill_images(images, batch);
      fill_labels(labels, batch);
      losses::EdgeBatch edges = losses::make_edge_batch(labels, train.num_classes);

      losses::TeacherTargets targets;
      const losses::TeacherTargets* tptr = nullptr;
      if (cache && cache->valid) {
        gather_targets(*cache, order, begin, count, targets);
        tptr = &targets;
      } else if (teacher_per_batch) {
        targets = distill_targets(aux, images);
        tptr = &targets;
      }

      const double lr = lr_of_step(epoch_in_phase * steps_per_epoch + s);
      last_lr = lr;
      StepLosses sl = train_step(net, sgd, params, images, labels, edges, tptr, use_gt,
                                 opt.loss, lr);
      sum_total += sl.total;
      sum_ce += sl.dml.ce;
      sum_lov += sl.dml.lovasz;
      sum_bce += sl.dml.bce;
      sum_cce += sl.dml.cce;
      sum_ba += sl.dml.battn;
      sum_ca += sl.dml.cattn;
      sum_klp += sl.csr.kl_parse;
      sum_klb += sl.csr.kl_binary;
      sum_klc += sl.csr.kl_category;
    }

    EvalResult ev = evaluate(net, val, B, opt.eval_groups);
    const double inv = 1.0 / steps_per_epoch;
    std::string line = "{\"phase\":" + std::to_string(phase) +
                       ",\"cycle\":" + std::to_string(cycle) +
                       ",\"epoch\":" + std::to_string(epoch_in_phase) +
                       ",\"lr\":" + fmt_double(last_lr) +
                       ",\"loss\":" + fmt_double(sum_total * inv) +
                       ",\"ce\":" + fmt_double(sum_ce * inv) +
                       ",\"lovasz\":" + fmt_double(sum_lov * inv) +
                       ",\"edge_bce\":" + fmt_double(sum_bce * inv) +
                       ",\"edge_cce\":" + fmt_double(sum_cce * inv) +
                       ",\"attn_b\":" + fmt_double(sum_ba * inv) +
                       ",\"attn_c\":" + fmt_double(sum_ca * inv) +
                       ",\"kl_parse\":" + fmt_double(sum_klp * inv) +
                       ",\"kl_binary\":" + fmt_double(sum_klb * inv) +
                       ",\"kl_category\":" + fmt_double(sum_klc * inv) +
                       ",\"val_mean_f1\":" + fmt_double(ev.mean_f1) +
                       ",\"val_miou\":" + fmt_double(ev.mean_iou) + "}";
    log_line(line);
    return ev;
  };

  // ---- phase 1: multi-task initialization
  CycleState cs;
  const int total_p1_steps = std::max(1, opt.epochs_init * steps_per_epoch);
  for (int e = 0; e < opt.epochs_init; ++e) {
    auto lr_fn = [&](int step_abs) {
      const double t = static_cast<double>(step_abs);
      return opt.lr * std::pow(1.0 - t / total_p1_steps, 0.9);
    };
    EvalResult ev = run_epoch(1, 0, e, static_cast<std::uint64_t>(e), opt.augment,
                              nullptr, nullptr, true, lr_fn);
    // phase-1 selection: best validation mean-F1 over the last 5 epochs
    if (e >= opt.epochs_init - 5 && ev.mean_f1 > cs.best_metric) {
      cs.best = WeightRecord::from_model(net);
      cs.best_metric = ev.mean_f1;
    }
  }
  if (cs.best_metric < 0) {  // epochs_init == 0
    cs.best = WeightRecord::from_model(net);
    cs.best_metric = eval_record(cs.best).mean_f1;
  }
  result.phase1_val_mean_f1 = cs.best_metric;

  // ---- phase 2: K cycles of self-ensemble + self-distillation
  WeightRecord teacher;
  bool have_teacher = false;
  TargetCache cache;

  for (int k = 1; k <= opt.cycles; ++k) {
    cs.k = k;
    cache.valid = false;
    if (have_teacher && !opt.augment_csr) {
      // teacher targets are fixed within the cycle; cache one pass
      teacher.to_model(aux);
      Tensor images;
      for (int begin = 0; begin < n_train; begin += B) {
        const int count = std::min(B, n_train - begin);
        std::vector<const data::LabeledSample*> batch(count);
        for (int i = 0; i < count; ++i) batch[i] = &train.samples[begin + i];
        fill_images(images, batch);
        losses::TeacherTargets t = distill_targets(aux, images);
        auto stash = [&](const Tensor& src, Tensor& dst) {
          if (src.n == 0) return;
          if (dst.n == 0) dst.resize(n_train, src.c, src.h, src.w);
          const std::size_t sz = static_cast<std::size_t>(src.c) * src.plane();
          for (int i = 0; i < count; ++i)
            std::copy(src.sample(i), src.sample(i) + sz, dst.sample(begin + i));
        };
        stash(t.parse_probs, cache.parse);
        stash(t.binary_probs, cache.binary);
        stash(t.category_probs, cache.category);
      }
      cache.valid = true;
    }

    cs.models_in_cycle.clear();
    const int cycle_steps = std::max(1, opt.epochs_per_cycle * steps_per_epoch);
    for (int e = 0; e < opt.epochs_per_cycle; ++e) {
      auto lr_fn = [&](int step_abs) {
        const double t = static_cast<double>(step_abs) / cycle_steps;
        return opt.lr_min +
               0.5 * (opt.lr_csr - opt.lr_min) * (1.0 + std::cos(3.14159265358979323846 * t));
      };
      const std::uint64_t tag = 1000 + static_cast<std::uint64_t>(k - 1) *
                                            opt.epochs_per_cycle + e;
      const bool use_gt = opt.distill_gt || !have_teacher;
      run_epoch(2, k, e, tag, opt.augment_csr, cache.valid ? &cache : nullptr,
                have_teacher ? &teacher : nullptr, use_gt, lr_fn);
      cs.models_in_cycle.push_back(WeightRecord::from_model(net));
    }

    WeightRecord aggregated = self_ensemble(cs.best, cs.models_in_cycle, k);
    recalibrate_bn(aggregated, aux, train, B);
    EvalResult ev = evaluate(aux, val, B, opt.eval_groups);
    log_line("{\"phase\":2,\"cycle\":" + std::to_string(k) +
             ",\"event\":\"self_ensemble\",\"val_mean_f1\":" + fmt_double(ev.mean_f1) +
             ",\"val_miou\":" + fmt_double(ev.mean_iou) +
             ",\"best_before\":" + fmt_double(cs.best_metric) + "}");
    if (!opt.out_dir.empty())
      checkpoint::save(aggregated, opt.out_dir + "/ckpt_cycle" + std::to_string(k) + ".bin");
    if (ev.mean_f1 > cs.best_metric) {
      cs.best = aggregated;
      cs.best_metric = ev.mean_f1;
    }
    teacher = aggregated;
    have_teacher = true;
  }

  if (!opt.out_dir.empty()) checkpoint::save(cs.best, opt.out_dir + "/best.bin");
  result.best = std::move(cs.best);
  result.best_val_mean_f1 = cs.best_metric;
  return result;
}

}  // namespace dmlcsr::csr
