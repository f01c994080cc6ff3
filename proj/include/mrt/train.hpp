#pragma once

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mrt/data.hpp"
#include "mrt/losses.hpp"
#include "mrt/memory.hpp"
#include "mrt/nn.hpp"

namespace mrt {

struct TrainConfig {
    int epochs = 30;
    double lr = 0.01;
    int64_t batch_size = 5;
    int eval_every = 1;    // evaluate every n epochs (the last epoch always)
    int64_t eval_batch = 64;
    uint64_t seed = 0;
    LossWeights loss;
    NetworkConfig net;
    bool ledger_enabled = false;
    int bytes_per_element = 4;

    void validate() const {
        if (epochs < 1) throw config_error("train: epochs must be >= 1");
        if (!(lr > 0)) throw config_error("train: lr must be > 0");
        if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
        if (eval_every < 1) throw config_error("train: eval_every must be >= 1");
        if (eval_batch < 1) throw config_error("train: eval_batch must be >= 1");
        net.validate();
        loss.validate();
    }
};

// Accuracies are percentages; gen_error is train - test on the stored values.
struct EpochRow {
    int epoch = 0;
    bool evaluated = false;
    double train_acc = std::numeric_limits<double>::quiet_NaN();
    double test_acc = std::numeric_limits<double>::quiet_NaN();
    double gen_error = std::numeric_limits<double>::quiet_NaN();
    double loss_total = 0.0;      // epoch means over steps
    double loss_supervised = 0.0;
    double loss_unsupervised = 0.0; // weighted sum of the alpha_k terms
};

struct TrainingReport {
    std::vector<EpochRow> rows;
    double final_train_acc = 0.0;
    double final_test_acc = 0.0;
    double final_gen_error = 0.0;
    int64_t total_steps = 0;
};

struct TrainOutcome {
    TrainingReport report;
    Network net;
    std::shared_ptr<MemoryLedger> ledger; // null unless enabled
    double wall_seconds = 0.0;            // reported on the console, not in artifacts
};

// Exact fraction correct; argmax ties go to the lowest class index, and the
// result is independent of the evaluation batch size.
inline double evaluate(const Network& net, const Dataset& ds, int64_t batch) {
    if (ds.size() == 0) throw contract_error("evaluate: empty dataset");
    int64_t correct = 0;
    for (int64_t start = 0; start < ds.size(); start += batch) {
        std::vector<int64_t> idx;
        for (int64_t i = start; i < std::min(start + batch, ds.size()); ++i) idx.push_back(i);
        MiniBatch mb = gather(ds, idx);
        GradGraph g;
        ForwardResult fwd = net.forward(g, mb.x, /*track_params=*/false);
        const double* lp = fwd.logits.data();
        const int64_t C = fwd.logits.dim(1);
        for (int64_t n = 0; n < mb.size(); ++n) {
            int best = 0;
            for (int64_t c = 1; c < C; ++c)
                if (lp[n * C + c] > lp[n * C + best]) best = static_cast<int>(c);
            if (best == mb.y[static_cast<size_t>(n)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// theta <- theta - lr * grad, plain SGD. `grads` is aligned with
// parameters(); undefined entries (no gradient path) leave the parameter
// untouched.
inline void sgd_step(Network& net, const std::vector<Tensor>& grads, double lr) {
    const auto params = net.parameters();
    if (grads.size() != params.size())
        throw contract_error("sgd_step: gradient list does not match parameter list");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].defined()) continue;
        require_same_shape(*params[i], grads[i], "sgd_step");
        Tensor next = Tensor::zeros(params[i]->shape());
        double* np = next.mutable_data();
        const double* pp = params[i]->data();
        const double* gp = grads[i].data();
        for (int64_t j = 0; j < next.numel(); ++j) np[j] = pp[j] - lr * gp[j];
        net.set_parameter(i, std::move(next));
    }
}

// Mini-batch SGD over the full objective. Deterministic given the seed:
// initialization, shuffling, and arithmetic order are all fixed.
inline TrainOutcome train(const TrainConfig& cfg, const Dataset& train_ds, const Dataset& test_ds) {
    cfg.validate();
    train_ds.check();
    test_ds.check();
    const auto t0 = std::chrono::steady_clock::now();

    TrainOutcome out{TrainingReport{}, Network::build(cfg.net, cfg.seed), nullptr, 0.0};
    Network& net = out.net;
    if (cfg.ledger_enabled) {
        out.ledger = std::make_shared<MemoryLedger>(cfg.bytes_per_element);
        out.ledger->record_elems(Category::param, Phase::idle, net.count_parameters().second);
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        MiniBatchIter batches(train_ds, cfg.batch_size, cfg.seed, epoch);
        EpochRow row;
        row.epoch = epoch;
        int64_t steps_this_epoch = 0;

        while (!batches.done()) {
            MiniBatch mb = batches.next();
            GradGraph g;
            if (out.ledger) {
                g.attach_ledger(out.ledger.get());
                out.ledger->record_elems(Category::data, Phase::idle, mb.x.numel());
            }

            LossBreakdown bd;
            ForwardResult fwd;
            try {
                fwd = net.forward(g, mb.x);
                bd = losses::total_objective(g, fwd, mb.y, cfg.loss);
                if (!std::isfinite(bd.total)) throw numeric_error("total objective is not finite");
            } catch (const numeric_error& e) {
                // diagnostic snapshot: where the run died and what was known
                std::ostringstream os;
                os << "training aborted at epoch " << epoch << " batch " << steps_this_epoch << ": "
                   << e.what() << " (total=" << bd.total << " supervised=" << bd.supervised
                   << " unsupervised=[";
                for (size_t i = 0; i < bd.unsupervised_per_k.size(); ++i)
                    os << (i ? "," : "") << bd.unsupervised_per_k[i];
                os << "])";
                throw numeric_error(os.str());
            }

            g.backward(bd.total_tensor);
            std::vector<Tensor> grads;
            grads.reserve(fwd.param_leaves.size());
            for (const Tensor& leaf : fwd.param_leaves)
                grads.push_back(leaf.tracked() && g.has_grad(leaf) ? g.grad(leaf) : Tensor());
            sgd_step(net, grads, cfg.lr);
            g.clear();
            if (out.ledger) out.ledger->record_elems(Category::data, Phase::idle, -mb.x.numel());

            row.loss_total += bd.total;
            row.loss_supervised += bd.supervised;
            row.loss_unsupervised += bd.total - bd.supervised;
            ++steps_this_epoch;
        }

        row.loss_total /= static_cast<double>(steps_this_epoch);
        row.loss_supervised /= static_cast<double>(steps_this_epoch);
        row.loss_unsupervised /= static_cast<double>(steps_this_epoch);
        out.report.total_steps += steps_this_epoch;

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            row.evaluated = true;
            row.train_acc = 100.0 * evaluate(net, train_ds, cfg.eval_batch);
            row.test_acc = 100.0 * evaluate(net, test_ds, cfg.eval_batch);
            row.gen_error = row.train_acc - row.test_acc;
        }
        out.report.rows.push_back(row);
    }

    const EpochRow& last = out.report.rows.back();
    out.report.final_train_acc = last.train_acc;
    out.report.final_test_acc = last.test_acc;
    out.report.final_gen_error = last.gen_error;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// Shortest exact decimal form; deterministic across runs.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_report_csv(std::ostream& os, const TrainingReport& r) {
    os << "epoch,train_acc,test_acc,gen_error,loss_total,loss_supervised,loss_unsupervised\n";
    for (const EpochRow& row : r.rows) {
        os << row.epoch << ',' << fmt_double(row.train_acc) << ',' << fmt_double(row.test_acc) << ','
           << fmt_double(row.gen_error) << ',' << fmt_double(row.loss_total) << ','
           << fmt_double(row.loss_supervised) << ',' << fmt_double(row.loss_unsupervised) << '\n';
    }
}

} // namespace mrt
