#include "kpda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "kpda/errors.hpp"
#include "kpda/heatmap.hpp"
#include "kpda/json_io.hpp"

namespace kpda {

namespace fs = std::filesystem;

std::string to_string(Head h) { return h == Head::mdam ? "mdam" : "refined"; }

Head head_from_string(const std::string& s) {
    if (s == "mdam") return Head::mdam;
    if (s == "refined") return Head::refined;
    throw UsageError("unknown head '" + s + "' (expected mdam or refined)");
}

TrainConfig TrainConfig::from(const Config& cfg) {
    TrainConfig t;
    t.model = model_config(cfg);
    t.schedule = schedule_config(cfg);
    t.augment = perturbation_config(cfg);
    t.sigma = cfg.get_double("model.sigma");
    t.batch_size = cfg.get_int("train.batch_size");
    t.epochs_stage1 = cfg.get_int("train.epochs_stage1");
    t.epochs_stage2 = cfg.get_int("train.epochs_stage2");
    t.iters_per_epoch = cfg.get_int("train.iters_per_epoch");
    t.stop_after_epoch = cfg.get_int("train.stop_after_epoch");
    t.seed = static_cast<std::uint64_t>(cfg.get_long("train.seed"));
    t.confidence_threshold = cfg.get_double("train.confidence_threshold");
    t.mixup = cfg.get_bool("train.mixup");
    t.mixup_alpha = cfg.get_double("train.mixup_alpha");
    t.ema_alpha = cfg.get_double("ema.alpha");
    t.stage1_lr = cfg.get_double("optim.stage1_lr");
    t.source_supervises_refined = cfg.get_bool("train.source_supervises_refined");
    t.augment_source = cfg.get_bool("train.augment_source");
    t.pseudo_head = head_from_string(cfg.get("train.pseudo_head"));
    t.run_hash = cfg.hash();
    t.validate();
    return t;
}

void TrainConfig::validate() const {
    if (schedule.joints != model.joints) {
        throw UsageError("schedule joint count " + std::to_string(schedule.joints) +
                         " differs from model.joints " + std::to_string(model.joints));
    }
    if (sigma <= 0) throw UsageError("model.sigma must be positive");
    if (batch_size < 1) throw UsageError("train.batch_size must be >= 1");
    if (epochs_stage1 < 0 || epochs_stage2 < 0) throw UsageError("epoch counts must be >= 0");
    if (iters_per_epoch < 0) throw UsageError("train.iters_per_epoch must be >= 0");
    if (confidence_threshold < 0 || confidence_threshold > 1) {
        throw UsageError("train.confidence_threshold must lie in [0, 1]");
    }
    if (mixup && mixup_alpha <= 0) throw UsageError("train.mixup_alpha must be positive");
    if (ema_alpha < 0 || ema_alpha > 1) throw UsageError("ema.alpha must lie in [0, 1]");
}

namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, int stage, int epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(epoch)};
    return std::mt19937_64(seq);
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

void set_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void check_images(std::span<const PoseSample> samples, int input_size) {
    for (const auto& s : samples) {
        if (s.image.dim() != 3 || s.image.size(0) != 3 || s.image.size(1) != input_size ||
            s.image.size(2) != input_size) {
            throw DataError("sample " + s.id + ": image is not 3x" + std::to_string(input_size) + "x" +
                            std::to_string(input_size));
        }
    }
}

void check_finite(const torch::Tensor& loss, const std::string& what, long iter) {
    if (!std::isfinite(loss.item<double>())) {
        throw NumericalError(what + " became non-finite at step " + std::to_string(iter));
    }
}

// A source batch with optional augmentation: images [B, 3, H, W], heatmaps [B, K, h, w].
struct LabelledBatch {
    torch::Tensor images;
    torch::Tensor heatmaps;
};

LabelledBatch source_batch(std::span<const PoseSample> source, std::span<const std::size_t> idx,
                           const TrainConfig& cfg, const Skeleton& skeleton, std::mt19937_64& rng) {
    const int ho = cfg.model.output_size();
    std::vector<torch::Tensor> images;
    std::vector<std::vector<Keypoint>> kps;
    for (std::size_t i : idx) {
        const auto& s = source[i];
        if (cfg.augment_source) {
            const auto p = sample_perturbation(rng, cfg.augment, cfg.model.input_size);
            images.push_back(apply_to_image(p, s.image));
            kps.push_back(transform_keypoints(p, s.keypoints(), ho, ho, skeleton.flip_partner));
        } else {
            images.push_back(s.image);
            kps.push_back(s.keypoints());
        }
    }
    return {torch::stack(images), encode_heatmaps(kps, ho, ho, cfg.sigma)};
}

ForwardOutputs take(const ForwardOutputs& out, int64_t begin, int64_t end) {
    ForwardOutputs o;
    o.features = out.features.slice(0, begin, end);
    o.multiscale = out.multiscale.slice(0, begin, end);
    o.heatmaps = out.heatmaps.slice(0, begin, end);
    o.refined = out.refined.slice(0, begin, end);
    return o;
}

std::vector<std::vector<int>> selected_lists(const torch::Tensor& selected) {
    auto sel = selected.to(torch::kCPU).contiguous();
    auto acc = sel.accessor<bool, 2>();
    std::vector<std::vector<int>> out(static_cast<std::size_t>(sel.size(0)));
    for (int64_t b = 0; b < sel.size(0); ++b) {
        for (int64_t c = 0; c < sel.size(1); ++c) {
            if (acc[b][c]) out[static_cast<std::size_t>(b)].push_back(static_cast<int>(c));
        }
    }
    return out;
}

void save_stage(const TrainConfig& cfg, const std::string& stage, int epochs, long iter,
                const ScheduleState& schedule, StudentNet& student, Teacher& teacher,
                torch::optim::Optimizer* opt) {
    if (cfg.checkpoint.empty()) return;
    CheckpointMeta meta;
    meta.stage = stage;
    meta.model_hash = cfg.model.fingerprint();
    meta.run_hash = cfg.run_hash;
    meta.epochs_completed = epochs;
    meta.iter = iter;
    meta.schedule = schedule;
    save_checkpoint(cfg.checkpoint, meta, student, teacher, opt);
}

} // namespace

StudentNet clone_student(const StudentNet& src) {
    StudentNet out(src->cfg);
    torch::NoGradGuard no_grad;
    auto dst_params = out->named_parameters();
    for (const auto& p : src->named_parameters()) dst_params[p.key()].copy_(p.value());
    auto dst_buffers = out->named_buffers();
    for (const auto& b : src->named_buffers()) dst_buffers[b.key()].copy_(b.value());
    out->train(src->is_training());
    return out;
}

torch::Tensor stack_images(std::span<const PoseSample> samples) {
    std::vector<torch::Tensor> images;
    images.reserve(samples.size());
    for (const auto& s : samples) images.push_back(s.image);
    return torch::stack(images);
}

torch::Tensor predict(StudentNet& student, std::span<const PoseSample> samples, Head head, int batch_size) {
    const bool was_training = student->is_training();
    student->eval();
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> chunks;
    for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), samples.size() - i);
        auto out = student->forward(stack_images(samples.subspan(i, n)));
        chunks.push_back(head == Head::mdam ? out.heatmaps : out.refined);
    }
    student->train(was_training);
    if (chunks.empty()) {
        const int ho = student->cfg.output_size();
        return torch::zeros({0, student->cfg.joints, ho, ho});
    }
    return torch::cat(chunks);
}

PretrainResult pretrain(const TrainConfig& cfg, std::span<const PoseSample> source, const Skeleton& skeleton,
                        StudentNet init, const EpochHook& on_epoch) {
    cfg.validate();
    if (source.empty() && cfg.epochs_stage1 > 0) throw DataError("pretraining needs labelled source samples");
    check_images(source, cfg.model.input_size);

    torch::manual_seed(cfg.seed);
    PretrainResult result;
    result.student = init ? init : StudentNet(cfg.model);
    auto& student = result.student;
    student->train();
    Teacher teacher(cfg.model);

    torch::optim::Adam opt(student->pose->parameters(), torch::optim::AdamOptions(cfg.stage1_lr));
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        auto rng = epoch_rng(cfg.seed, 1, epoch);
        set_lr(opt, step_lr(epoch, cfg.stage1_lr, cfg.schedule.step_milestones, cfg.schedule.step_gamma));
        const auto order = permutation(source.size(), rng);
        double sum = 0.0;
        int count = 0;
        for (std::size_t i = 0; i < order.size(); i += batch) {
            const auto n = std::min(batch, order.size() - i);
            auto b = source_batch(source, std::span(order).subspan(i, n), cfg, skeleton, rng);
            auto out = student->forward(b.images);
            auto loss = mse_heatmap_loss(out.heatmaps, b.heatmaps);
            if (cfg.source_supervises_refined) loss = loss + mse_heatmap_loss(out.refined, b.heatmaps);
            check_finite(loss, "source loss", result.steps);
            opt.zero_grad();
            loss.backward();
            opt.step();
            sum += loss.item<double>();
            ++count;
            ++result.steps;
        }
        result.epoch_loss.push_back(count ? sum / count : 0.0);
        teacher.copy_from(student->pose);
        ScheduleState state;
        state.epoch = epoch + 1;
        state.iter = result.steps;
        state.lr = step_lr(epoch + 1, cfg.stage1_lr, cfg.schedule.step_milestones, cfg.schedule.step_gamma);
        save_stage(cfg, "pretrain", epoch + 1, result.steps, state, student, teacher, &opt);
        if (on_epoch) {
            const bool go_on = on_epoch(epoch + 1, result.steps, student);
            student->train();
            if (!go_on) break;
        }
    }
    if (cfg.epochs_stage1 == 0) {
        teacher.copy_from(student->pose);
        save_stage(cfg, "pretrain", 0, 0, ScheduleState{}, student, teacher, &opt);
    }
    return result;
}

std::vector<PseudoLabel> generate_pseudo_labels(StudentNet& student, std::span<const PoseSample> target,
                                                double threshold, Head head, int batch_size) {
    if (threshold < 0 || threshold > 1) throw UsageError("confidence threshold must lie in [0, 1]");
    SupervisionGuard guard;
    check_images(target, student->cfg.input_size);
    const auto decoded = decode_heatmaps(predict(student, target, head, batch_size));
    std::vector<PseudoLabel> labels;
    labels.reserve(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        PseudoLabel l;
        l.sample_id = target[i].id;
        l.keypoints = decoded[i].keypoints;
        for (std::size_t c = 0; c < l.keypoints.size(); ++c) {
            const double conf = std::clamp(decoded[i].confidences[c], 0.0, 1.0);
            l.confidence.push_back(conf);
            l.keypoints[c].visible = conf >= threshold;
        }
        labels.push_back(std::move(l));
    }
    return labels;
}

AdaptLosses adaptation_losses(StudentNet& student, const AdaptBatch& b, const ScheduleState& state,
                              const TrainConfig& cfg) {
    const bool mixed = b.mix_images.defined();
    const int64_t n_src = b.src_images.size(0);
    const int64_t n_tgt = b.tgt_images.size(0);
    const bool adversarial = cfg.schedule.adversarial;

    // One forward so batch normalisation sees both domains together.
    std::vector<torch::Tensor> inputs{b.src_images, b.tgt_images};
    if (mixed) inputs.push_back(b.mix_images);
    auto out = student->forward(torch::cat(inputs));
    auto out_s = take(out, 0, n_src);
    auto out_t = take(out, n_src, n_src + n_tgt);
    auto out_p = mixed ? take(out, n_src + n_tgt, n_src + 2 * n_tgt) : out_t;
    const auto& pseudo_targets = mixed ? b.mix_targets : b.tgt_pseudo;

    auto l_source = mse_heatmap_loss(out_s.heatmaps, b.src_heatmaps);
    if (cfg.source_supervises_refined) l_source = l_source + mse_heatmap_loss(out_s.refined, b.src_heatmaps);

    torch::Tensor l_d = torch::zeros({});
    if (adversarial) {
        auto logit_s = student->classify(out_s, state.lambda_adv);
        auto logit_t = student->classify(out_p, state.lambda_adv);
        l_d = domain_losses(logit_s, logit_t).l_d;
    }

    auto l_sd = mse_heatmap_loss(out_t.heatmaps, out_t.refined.detach());
    auto l_mt = mse_heatmap_loss(out_t.refined, b.teacher_targets.detach());
    auto sel_t = selected_pseudo_loss(per_joint_mse(out_p.heatmaps, pseudo_targets), state.alpha_N_T, b.available);
    auto sel_r = selected_pseudo_loss(per_joint_mse(out_p.refined, pseudo_targets), state.alpha_N_R, b.available);

    AdaptLosses res;
    res.objective = weighted_objective(l_source, l_sd, sel_t.value, l_mt, sel_r.value, state);
    // The classifier minimises L_d; the extractor sees -lambda_adv times its gradient.
    if (adversarial) res.objective = res.objective + l_d;

    LossBreakdown parts;
    parts.l_source = l_source.item<double>();
    parts.l_d = l_d.item<double>();
    parts.l_adv = -parts.l_d;
    parts.l_sd = l_sd.item<double>();
    parts.l_pseudo_mdam = sel_t.value.item<double>();
    parts.l_mt = l_mt.item<double>();
    parts.l_pseudo_refine = sel_r.value.item<double>();
    parts.selected_joints_mdam = selected_lists(sel_t.selected);
    parts.selected_joints_refine = selected_lists(sel_r.selected);
    res.breakdown = total_loss(std::move(parts), state);
    return res;
}

AdaptResult train(const TrainConfig& cfg, std::span<const PoseSample> source, std::span<const PoseSample> target,
                  std::span<const PseudoLabel> pseudo, const Skeleton& skeleton, StudentNet pretrained,
                  const std::optional<fs::path>& resume) {
    SupervisionGuard guard;
    cfg.validate();
    const int k = cfg.model.joints;
    if (skeleton.size() != k) {
        throw DataError("skeleton has " + std::to_string(skeleton.size()) + " joints, model expects " +
                        std::to_string(k));
    }
    if (source.empty() || target.empty()) throw DataError("adaptation needs source and target samples");
    check_images(source, cfg.model.input_size);
    check_images(target, cfg.model.input_size);

    std::unordered_map<std::string, const PseudoLabel*> by_id;
    for (const auto& l : pseudo) by_id[l.sample_id] = &l;
    std::vector<const PseudoLabel*> labels;
    for (const auto& s : target) {
        auto it = by_id.find(s.id);
        if (it == by_id.end()) throw DataError("no pseudo label for target sample " + s.id);
        if (static_cast<int>(it->second->keypoints.size()) != k) {
            throw DataError("pseudo label for " + s.id + " has " +
                            std::to_string(it->second->keypoints.size()) + " joints, expected " +
                            std::to_string(k));
        }
        labels.push_back(it->second);
    }

    torch::manual_seed(cfg.seed);
    AdaptResult result;
    if (!pretrained) throw UsageError("train: a pretrained student is required");
    result.student = clone_student(pretrained);
    auto& student = result.student;
    student->train();
    result.teacher.emplace(cfg.model);
    auto& teacher = *result.teacher;
    teacher.copy_from(student->pose);

    torch::optim::Adam opt(student->parameters(), torch::optim::AdamOptions(cfg.schedule.base_lr));

    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const long ipe = cfg.iters_per_epoch > 0
                         ? cfg.iters_per_epoch
                         : static_cast<long>((target.size() + batch - 1) / batch);
    const long total = ipe * cfg.epochs_stage2;
    // poly decay needs a positive horizon even when no step will run
    const long horizon = std::max(total, 1L);
    const int ho = cfg.model.output_size();
    const auto& sched = cfg.schedule;

    int start_epoch = 0;
    long iter = 0;
    if (resume) {
        const auto meta = load_checkpoint(*resume, student, &teacher, &opt);
        if (meta.stage != "adapt") {
            throw DataError(resume->string() + " is a '" + meta.stage + "' checkpoint, not an adaptation one");
        }
        if (!cfg.run_hash.empty() && !meta.run_hash.empty() && meta.run_hash != cfg.run_hash) {
            throw DataError(resume->string() + " was written by a different run configuration");
        }
        start_epoch = meta.epochs_completed;
        iter = meta.iter;
    } else {
        save_stage(cfg, "adapt", 0, 0, adaptation_schedule(0, 0, horizon, sched), student, teacher, &opt);
    }
    result.epochs_completed = start_epoch;

    std::ofstream metrics;
    if (!cfg.metrics.empty()) {
        if (cfg.metrics.has_parent_path()) fs::create_directories(cfg.metrics.parent_path());
        metrics.open(cfg.metrics, resume ? std::ios::app : std::ios::trunc);
        if (!metrics) throw DataError("cannot write metrics to " + cfg.metrics.string());
    }

    for (int epoch = start_epoch; epoch < cfg.epochs_stage2; ++epoch) {
        if (cfg.stop_after_epoch >= 0 && epoch >= cfg.stop_after_epoch) {
            result.interrupted = true;
            break;
        }
        result.epoch_states.push_back(adaptation_schedule(epoch, iter, horizon, sched));
        auto rng = epoch_rng(cfg.seed, 2, epoch);
        const auto src_order = permutation(source.size(), rng);
        const auto tgt_order = permutation(target.size(), rng);

        for (long step = 0; step < ipe; ++step) {
            const auto state = adaptation_schedule(epoch, iter, horizon, sched);
            set_lr(opt, state.lr);

            std::vector<std::size_t> src_idx;
            std::vector<std::size_t> tgt_idx;
            for (std::size_t j = 0; j < batch; ++j) {
                const std::size_t slot = static_cast<std::size_t>(step) * batch + j;
                src_idx.push_back(src_order[slot % src_order.size()]);
                tgt_idx.push_back(tgt_order[slot % tgt_order.size()]);
            }
            auto src = source_batch(source, src_idx, cfg, skeleton, rng);

            // Target side: the student sees a perturbed image, the teacher the clean one.
            std::vector<torch::Tensor> clean;
            std::vector<torch::Tensor> perturbed;
            std::vector<Perturbation> perts;
            std::vector<std::vector<Keypoint>> pseudo_kps;
            for (std::size_t i : tgt_idx) {
                const auto p = sample_perturbation(rng, cfg.augment, cfg.model.input_size);
                clean.push_back(target[i].image);
                perturbed.push_back(apply_to_image(p, target[i].image));
                pseudo_kps.push_back(transform_keypoints(p, labels[i]->keypoints, ho, ho, skeleton.flip_partner));
                perts.push_back(p);
            }
            auto tgt_clean = torch::stack(clean);
            auto tgt_images = torch::stack(perturbed);
            auto tgt_pseudo = encode_heatmaps(pseudo_kps, ho, ho, cfg.sigma);
            auto available = torch::zeros({static_cast<int64_t>(batch), k}, torch::kBool);
            for (std::size_t b = 0; b < batch; ++b) {
                for (int c = 0; c < k; ++c) available[b][c] = pseudo_kps[b][c].visible;
            }

            torch::Tensor teacher_out;
            {
                auto t = teacher.forward(tgt_clean);
                std::vector<torch::Tensor> moved;
                for (std::size_t b = 0; b < batch; ++b) {
                    moved.push_back(apply_geometric_to_heatmaps(perts[b].geometric_part(), t[b],
                                                                skeleton.flip_partner));
                }
                teacher_out = torch::stack(moved);
            }

            AdaptBatch ab;
            ab.src_images = src.images;
            ab.src_heatmaps = src.heatmaps;
            ab.tgt_images = tgt_images;
            ab.tgt_pseudo = tgt_pseudo;
            ab.available = available;
            ab.teacher_targets = teacher_out;
            if (cfg.mixup) {
                std::vector<torch::Tensor> si, sh, ti, th;
                for (std::size_t b = 0; b < batch; ++b) {
                    auto m = mixup(src.images[b], src.heatmaps[b], tgt_images[b], tgt_pseudo[b], rng,
                                   cfg.mixup_alpha);
                    si.push_back(m.source_image);
                    sh.push_back(m.source_heatmaps);
                    ti.push_back(m.target_image);
                    th.push_back(m.target_heatmaps);
                }
                ab.src_images = torch::stack(si);
                ab.src_heatmaps = torch::stack(sh);
                ab.mix_images = torch::stack(ti);
                ab.mix_targets = torch::stack(th);
            }

            auto losses = adaptation_losses(student, ab, state, cfg);
            check_finite(losses.objective, "training loss", iter);
            opt.zero_grad();
            losses.objective.backward();
            opt.step();
            ema_update(teacher.net(), student->pose, cfg.ema_alpha);

            StepRecord rec{iter, epoch, std::move(losses.breakdown), state};
            if (metrics.is_open()) {
                nlohmann::json line{{"iter", rec.iter},
                                    {"epoch", rec.epoch},
                                    {"losses", losses_to_json(rec.losses)},
                                    {"schedule", schedule_to_json(rec.schedule)}};
                metrics << line.dump() << "\n";
            }
            result.steps.push_back(std::move(rec));
            ++iter;
        }
        if (metrics.is_open()) metrics.flush();
        result.epochs_completed = epoch + 1;
        save_stage(cfg, "adapt", epoch + 1, iter, adaptation_schedule(epoch + 1, iter, horizon, sched), student,
                   teacher, &opt);
    }
    return result;
}

} // namespace kpda
