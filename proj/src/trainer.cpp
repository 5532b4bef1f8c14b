#include "sst/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace sst {

Vocab Vocab::build(const std::vector<std::string>& tokens) {
    Vocab v;
    v.id_to_token = {"<pad>", "<read>", "<user>", "<assistant>"};
    for (int i = 0; i < static_cast<int>(v.id_to_token.size()); ++i)
        v.token_to_id[v.id_to_token[static_cast<std::size_t>(i)]] = i;
    for (const auto& t : tokens)
        if (!v.token_to_id.count(t)) {
            v.token_to_id[t] = static_cast<int>(v.id_to_token.size());
            v.id_to_token.push_back(t);
        }
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = token_to_id.find(token);
    if (it == token_to_id.end())
        throw std::invalid_argument("Vocab: unknown token '" + token + "'");
    return it->second;
}

std::vector<int> Vocab::ids(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed)
    : encoder(cfg.encoder, seed),
      adapter(cfg.adapter, seed + 1),
      decoder(cfg.decoder, seed + 2) {
    if (cfg.adapter.d_model != cfg.encoder.d_model)
        throw std::invalid_argument("Model: adapter d_model mismatch");
    if (cfg.adapter.d_llm != cfg.decoder.d_llm)
        throw std::invalid_argument("Model: adapter d_llm mismatch");
    if (cfg.encoder.chunk_frames % 4 != 0)
        throw std::invalid_argument("Model: chunk_frames must be divisible by 4");
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    encoder.add_params(out);
    adapter.add_params(out);
    decoder.add_params(out);
    return out;
}

double lr_at(int step, int total_steps, const TrainConfig& cfg) {
    if (cfg.max_lr <= 0.0 || cfg.warmup_steps < 0)
        throw std::invalid_argument("lr_at: bad config");
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("lr_at: step outside [0, total_steps]");
    if (step < cfg.warmup_steps)
        return cfg.max_lr * static_cast<double>(step) /
               static_cast<double>(cfg.warmup_steps);
    if (total_steps <= cfg.warmup_steps) return step == total_steps ? 0.0 : cfg.max_lr;
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(total_steps - cfg.warmup_steps);
    return 0.5 * cfg.max_lr * (1.0 + std::cos(M_PI * progress));
}

Index TrainingSequence::supervised_count() const {
    Index n = 0;
    for (std::uint8_t m : loss_mask) n += m;
    return n;
}

TrainingSequence build_training_sequence(const RobustSegment& seg, int multiplier,
                                         const Vocab& vocab,
                                         const std::vector<int>& instruction,
                                         const SynthesisConfig& scfg,
                                         Index embeddings_per_chunk) {
    if (embeddings_per_chunk < 1)
        throw std::invalid_argument("build_training_sequence: bad embedding count");
    const Trajectory merged = merge_chunks(seg.trajectory, multiplier, scfg);

    TrainingSequence out;
    auto push = [&](int id, std::uint8_t mask) {
        out.token_ids.push_back(id);
        out.loss_mask.push_back(mask);
    };
    for (int id : instruction) push(id, 0);

    int prev_chunk = 0;
    for (const auto& step : merged.steps) {
        const Index n_chunks = step.chunk_index - prev_chunk;
        push(vocab.specials.user, 0);
        SpeechSpan span;
        span.pos_begin = out.length();
        span.n_embeddings = n_chunks * embeddings_per_chunk;
        span.chunk_begin = prev_chunk;
        span.n_chunks = n_chunks;
        out.speech.push_back(span);
        for (Index i = 0; i < span.n_embeddings; ++i) push(-1, 0);
        push(vocab.specials.assistant, 0);
        for (const auto& tok : step.tokens) push(vocab.id(tok), 1);
        push(vocab.specials.read, 1);
        prev_chunk = step.chunk_index;
    }
    return out;
}

Tensor segment_loss(const Model& model, const Matrix& frames, const TrainingSequence& seq,
                    Tape* tape, Rng* dropout_rng) {
    Tensor encoded = model.encoder.forward_full(Tensor(frames), tape);
    Tensor adapted = model.adapter.forward(encoded, tape);
    const Index epc = model.embeddings_per_chunk();

    // Assemble the input row sequence from token embeddings and adapter slices.
    std::vector<Tensor> pieces;
    Index pos = 0;
    std::size_t next_span = 0;
    const Index t_total = seq.length();
    while (pos < t_total) {
        if (next_span < seq.speech.size() && seq.speech[next_span].pos_begin == pos) {
            const SpeechSpan& span = seq.speech[next_span];
            pieces.push_back(
                slice_rows(adapted, span.chunk_begin * epc, span.n_embeddings, tape));
            pos += span.n_embeddings;
            ++next_span;
        } else {
            std::vector<int> run;
            while (pos < t_total && seq.token_ids[static_cast<std::size_t>(pos)] >= 0 &&
                   (next_span >= seq.speech.size() ||
                    seq.speech[next_span].pos_begin != pos)) {
                run.push_back(seq.token_ids[static_cast<std::size_t>(pos)]);
                ++pos;
            }
            if (run.empty())
                throw std::logic_error("segment_loss: malformed sequence layout");
            pieces.push_back(model.decoder.embed_tokens(run, tape));
        }
    }
    Tensor inputs = concat_rows(pieces, tape);
    if (inputs.rows() != t_total)
        throw std::logic_error("segment_loss: assembled length mismatch");
    Tensor logits = model.decoder.forward_logits(inputs, tape, dropout_rng);

    // position t predicts the token at t+1
    std::vector<int> targets(static_cast<std::size_t>(t_total - 1), 0);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(t_total - 1), 0);
    for (Index t = 0; t + 1 < t_total; ++t) {
        const int next = seq.token_ids[static_cast<std::size_t>(t + 1)];
        if (seq.loss_mask[static_cast<std::size_t>(t + 1)] && next >= 0) {
            targets[static_cast<std::size_t>(t)] = next;
            mask[static_cast<std::size_t>(t)] = 1;
        }
    }
    return cross_entropy(slice_rows(logits, 0, t_total - 1, tape), targets, mask, tape);
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void Adam::step(double lr, double grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Matrix g = grad_scale * params_[i].grad();
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * g.array().square()).matrix();
        const Matrix m_hat = m_[i] / bc1;
        const Matrix v_hat = v_[i] / bc2;
        params_[i].value() -=
            (lr * m_hat.array() / (v_hat.array().sqrt() + eps_)).matrix();
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

namespace {

struct PlannedItem {
    std::size_t seg = 0;
    int multiplier = 0;
    Index length = 0;
};

// Draws the per-epoch order and multipliers, then packs items into batches
// bounded by the token budget (a lone oversized sequence forms its own batch).
std::vector<std::vector<PlannedItem>> plan_batches(
    const std::vector<RobustSegment>& dataset, const Vocab& vocab,
    const std::vector<int>& instruction, const SynthesisConfig& scfg, Index epc,
    const TrainConfig& cfg, Rng& rng) {
    std::vector<std::vector<PlannedItem>> batches;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        std::vector<PlannedItem> batch;
        Index used = 0;
        for (std::size_t si : order) {
            PlannedItem item;
            item.seg = si;
            item.multiplier =
                static_cast<int>(rng.uniform_int(1, scfg.max_multiplier));
            item.length = build_training_sequence(dataset[si], item.multiplier, vocab,
                                                  instruction, scfg, epc)
                              .length();
            if (!batch.empty() && used + item.length > cfg.batch_token_budget) {
                batches.push_back(std::move(batch));
                batch.clear();
                used = 0;
            }
            used += item.length;
            batch.push_back(item);
        }
        if (!batch.empty()) batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace

std::vector<TrainStepLog> train(Model& model, const std::vector<RobustSegment>& dataset,
                                const Vocab& vocab, const std::vector<int>& instruction,
                                const SynthesisConfig& scfg, const TrainConfig& cfg,
                                const std::optional<LoraConfig>& lora) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.stage != 1 && cfg.stage != 2)
        throw std::invalid_argument("train: stage must be 1 or 2");
    if (cfg.stage == 2 && !lora)
        throw std::invalid_argument("train: stage 2 requires a LoRA config");
    if (cfg.epochs < 1 || cfg.batch_token_budget < 1)
        throw std::invalid_argument("train: bad config");

    if (cfg.stage == 2) model.decoder.apply_lora(*lora);

    for (auto& [name, p] : model.named_params()) p.set_requires_grad(false);
    std::vector<Tensor> trainable;
    if (cfg.stage == 1) {
        model.encoder.add_trainable(trainable);
        model.adapter.add_trainable(trainable);
    } else {
        model.decoder.add_trainable(true, trainable);
    }
    for (auto& p : trainable) p.set_requires_grad(true);

    const Index epc = model.embeddings_per_chunk();
    Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    // all data-order and multiplier decisions are drawn once, up front
    Rng plan_rng(cfg.seed);
    const auto batches = plan_batches(dataset, vocab, instruction, scfg, epc, cfg, plan_rng);
    const int total_steps = static_cast<int>(batches.size());

    Adam opt(trainable);
    std::vector<TrainStepLog> log;
    int step = 0;
    for (const auto& batch : batches) {
        double loss_sum = 0.0;
        Index positions = 0;
        for (const auto& item : batch) {
            const TrainingSequence seq = build_training_sequence(
                dataset[item.seg], item.multiplier, vocab, instruction, scfg, epc);
            Tape tape;
            Tensor loss = segment_loss(model, dataset[item.seg].frames, seq, &tape,
                                       cfg.stage == 2 ? &dropout_rng : nullptr);
            backward(loss, tape);
            loss_sum += loss.value()(0, 0);
            positions += item.length;
        }
        const double lr = lr_at(std::min(step, total_steps), total_steps, cfg);
        opt.step(lr, 1.0 / static_cast<double>(batch.size()));
        ++step;
        log.push_back({step, lr, loss_sum / static_cast<double>(batch.size()), positions});
    }
    return log;
}

}  // namespace sst
