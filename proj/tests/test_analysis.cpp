#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "mrt/analysis.hpp"
#include "oracles.hpp"

using namespace mrt;
using Catch::Approx;

TEST_CASE("pca_2d recovers axis-aligned 2-d data up to the sign convention") {
    // centered, axis-aligned: covariance diag(16, 1)
    Tensor pts = Tensor::from({4, 2}, {4, 1, -4, 1, 4, -1, -4, -1});
    Tensor coords = pca_2d(pts);
    REQUIRE(coords.shape() == Shape{4, 2});
    // recovered exactly, signs fixed by the largest-|component| convention
    CHECK(coords.at2(0, 0) == Approx(4.0).margin(1e-9));
    CHECK(coords.at2(1, 0) == Approx(-4.0).margin(1e-9));
    CHECK(coords.at2(0, 1) == Approx(1.0).margin(1e-9));
    CHECK(coords.at2(2, 1) == Approx(-1.0).margin(1e-9));
}

TEST_CASE("pca_2d on points lying in a plane has negligible residual") {
    Rng rng(61);
    const int64_t n = 40;
    std::vector<double> data;
    for (int64_t i = 0; i < n; ++i) {
        const double u = rng.normal(), v = rng.normal();
        // plane embedded in 3-d
        data.push_back(u);
        data.push_back(v);
        data.push_back(0.5 * u - 0.25 * v);
    }
    Tensor pts = Tensor::from({n, 3}, data);
    Pca2d full = pca_2d_full(pts);

    // total variance equals the captured top-2 variance
    double total = 0.0;
    std::vector<double> mean(3, 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) mean[static_cast<size_t>(j)] += pts.at2(i, j) / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) {
            const double c = pts.at2(i, j) - mean[static_cast<size_t>(j)];
            total += c * c / static_cast<double>(n);
        }
    CHECK(total - full.eigenvalues[0] - full.eigenvalues[1] < 1e-9);
}

TEST_CASE("pca_2d projection variance equals the top-2 covariance eigenvalues") {
    Rng rng(62);
    Tensor pts = oracle::random_tensor({10, 5}, rng);
    Pca2d full = pca_2d_full(pts);

    // naive eigen-oracle on the covariance matrix
    const int64_t n = 10, d = 5;
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += pts.at2(i, j) / static_cast<double>(n);
    std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j)
            for (int64_t k = 0; k < d; ++k)
                cov[static_cast<size_t>(j * d + k)] +=
                    (pts.at2(i, j) - mean[static_cast<size_t>(j)]) *
                    (pts.at2(i, k) - mean[static_cast<size_t>(k)]) / static_cast<double>(n);
    const auto eigs = oracle::sym_eigenvalues(cov, 5);
    CHECK(full.eigenvalues[0] == Approx(eigs[0]).epsilon(1e-9));
    CHECK(full.eigenvalues[1] == Approx(eigs[1]).epsilon(1e-9));

    // projection variances match the eigenvalues as well
    for (int comp = 0; comp < 2; ++comp) {
        double mu = 0.0, var = 0.0;
        for (int64_t i = 0; i < n; ++i) mu += full.coords.at2(i, comp) / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            const double c = full.coords.at2(i, comp) - mu;
            var += c * c / static_cast<double>(n);
        }
        CHECK(var == Approx(full.eigenvalues[comp]).epsilon(1e-9));
    }
}

TEST_CASE("pca_2d is invariant to row order") {
    Rng rng(63);
    Tensor pts = oracle::random_tensor({8, 4}, rng);
    Tensor coords = pca_2d(pts);

    // reverse the rows
    std::vector<double> rev;
    for (int64_t i = 7; i >= 0; --i)
        for (int64_t j = 0; j < 4; ++j) rev.push_back(pts.at2(i, j));
    Tensor coords_rev = pca_2d(Tensor::from({8, 4}, rev));
    for (int64_t i = 0; i < 8; ++i) {
        CHECK(coords.at2(i, 0) == Approx(coords_rev.at2(7 - i, 0)).margin(1e-10));
        CHECK(coords.at2(i, 1) == Approx(coords_rev.at2(7 - i, 1)).margin(1e-10));
    }
}

TEST_CASE("pca_2d flags rank-deficient inputs") {
    // all points on one line: second axis is zero
    Tensor line = Tensor::from({4, 3}, {1, 2, 3, 2, 4, 6, 3, 6, 9, 4, 8, 12});
    Pca2d full = pca_2d_full(line);
    CHECK(full.degenerate);
    for (int64_t i = 0; i < 4; ++i) CHECK(full.coords.at2(i, 1) == 0.0);

    CHECK_THROWS_AS(pca_2d(Tensor::zeros({2, 5})), contract_error); // N < 3
    CHECK_THROWS_AS(pca_2d(Tensor::zeros({5, 1})), contract_error); // D < 2
}

TEST_CASE("lda separates well-separated blobs and is at chance on identical ones") {
    Rng rng(64);
    std::vector<double> coords;
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) { // blob A at (-5, 0), blob B at (+5, 0)
        const bool b = i % 2;
        coords.push_back((b ? 5.0 : -5.0) + 0.3 * rng.normal());
        coords.push_back(0.3 * rng.normal());
        labels.push_back(b);
    }
    Tensor c = Tensor::from({100, 2}, coords);
    LdaModel model = lda_fit(c, labels);
    CHECK(lda_accuracy(model, c, labels) == Approx(1.0).margin(1e-12));

    // identical distributions: accuracy near one half
    std::vector<double> same;
    std::vector<int> same_labels;
    for (int i = 0; i < 2000; ++i) {
        same.push_back(rng.normal());
        same.push_back(rng.normal());
        same_labels.push_back(i % 2);
    }
    Tensor cs = Tensor::from({2000, 2}, same);
    LdaModel chance = lda_fit(cs, same_labels);
    CHECK(lda_accuracy(chance, cs, same_labels) == Approx(0.5).margin(0.06));
}

TEST_CASE("lda decision matches a closed-form oracle on hand-placed points") {
    // 6 points, pooled covariance worked out by hand below
    Tensor c = Tensor::from({6, 2}, {0, 0, 1, 0, 0, 1, 3, 3, 4, 3, 3, 4});
    std::vector<int> labels = {0, 0, 0, 1, 1, 1};
    LdaModel m = lda_fit(c, labels, 0.0);

    // class means (1/3, 1/3) and (10/3, 10/3); within-class scatter equals
    // for both classes, pooled covariance = scatter / (n - 2)
    CHECK(m.mean_a[0] == Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(m.mean_b[0] == Approx(10.0 / 3.0).epsilon(1e-12));

    // oracle classifier: evaluate both Gaussian discriminants explicitly
    auto oracle_classify = [&](double x, double y) {
        const double det = m.cov[0] * m.cov[2] - m.cov[1] * m.cov[1];
        const double inv[3] = {m.cov[2] / det, -m.cov[1] / det, m.cov[0] / det};
        auto score = [&](const double* mu, double prior) {
            const double dx = x - mu[0], dy = y - mu[1];
            const double mahal = dx * (inv[0] * dx + inv[1] * dy) + dy * (inv[1] * dx + inv[2] * dy);
            return -0.5 * mahal + std::log(prior);
        };
        return score(m.mean_a, m.prior_a) >= score(m.mean_b, m.prior_b) ? 0 : 1;
    };
    Rng rng(65);
    for (int trial = 0; trial < 200; ++trial) {
        const double x = rng.uniform(-2.0, 6.0), y = rng.uniform(-2.0, 6.0);
        CHECK(lda_classify(m, x, y) == oracle_classify(x, y));
    }
    CHECK(lda_accuracy(m, c, labels) == 1.0);
}

TEST_CASE("lda is invariant under a shared invertible affine transform") {
    Rng rng(66);
    std::vector<double> coords;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        const bool b = i % 2;
        coords.push_back((b ? 1.5 : -1.5) + rng.normal());
        coords.push_back(rng.normal());
        labels.push_back(b);
    }
    Tensor c = Tensor::from({60, 2}, coords);
    const double acc = lda_accuracy(lda_fit(c, labels, 0.0), c, labels);

    // affine map A = [[2, 1], [0.5, -1]], shift (3, -7)
    std::vector<double> mapped;
    for (int i = 0; i < 60; ++i) {
        const double x = c.at2(i, 0), y = c.at2(i, 1);
        mapped.push_back(2 * x + 1 * y + 3);
        mapped.push_back(0.5 * x - 1 * y - 7);
    }
    Tensor cm = Tensor::from({60, 2}, mapped);
    const double acc_mapped = lda_accuracy(lda_fit(cm, labels, 0.0), cm, labels);
    CHECK(acc == Approx(acc_mapped).margin(1e-9));
}

TEST_CASE("lda input validation") {
    Tensor c = Tensor::from({3, 2}, {0, 0, 1, 1, 2, 2});
    CHECK_THROWS_AS(lda_fit(c, {0, 0, 0}), contract_error);       // one class
    CHECK_THROWS_AS(lda_fit(c, {0, 1, 2}), contract_error);       // three classes
    CHECK_THROWS_AS(lda_fit(c, {0, 1}), contract_error);          // count mismatch
    // singular covariance without ridge prompts for ridge
    Tensor degenerate = Tensor::from({4, 2}, {0, 0, 0, 0, 1, 0, 1, 0});
    CHECK_THROWS_AS(lda_fit(degenerate, {0, 0, 1, 1}, 0.0), numeric_error);
    CHECK_NOTHROW(lda_fit(degenerate, {0, 0, 1, 1}, 1e-6));
}

TEST_CASE("layer_probe gives chance-level accuracy on an untrained net and the right curve length") {
    SynthSpec spec;
    spec.n = 300;
    spec.intrinsic_dim = 3;
    spec.ambient_dim = 16;
    spec.classes = 2;
    spec.noise = 0.2;
    spec.seed = 19;
    Dataset ds = synthetic_manifold(spec);

    NetworkConfig nc;
    nc.input_shape = {16};
    nc.bottleneck_start_width = 8;
    nc.bottleneck_min_width = 4;
    nc.num_classes = 2;
    Network net = Network::build(nc, 99);

    ProbeResult probe = layer_probe(net, ds, 0, 1, 100, 5);
    CHECK(probe.curve.size() == net.num_bottleneck_layers() + 1);
    CHECK(probe.curve[0].layer == "input");
    CHECK(probe.curve[1].layer == "fc1");
    for (const ProbePoint& p : probe.curve) {
        CHECK(p.accuracy >= 0.0);
        CHECK(p.accuracy <= 1.0);
    }

    CHECK_THROWS_AS(layer_probe(net, ds, 1, 1, 100, 5), contract_error);
    CHECK_THROWS_AS(layer_probe(net, ds, 0, 7, 100, 5), contract_error); // class absent
}

TEST_CASE("probe csv row count is layers plus one") {
    SynthSpec spec;
    spec.n = 60;
    spec.intrinsic_dim = 2;
    spec.ambient_dim = 8;
    spec.seed = 20;
    Dataset ds = synthetic_manifold(spec);
    NetworkConfig nc;
    nc.input_shape = {8};
    nc.bottleneck_start_width = 4;
    nc.bottleneck_min_width = 4;
    nc.num_classes = 2;
    Network net = Network::build(nc, 1);
    ProbeResult probe = layer_probe(net, ds, 0, 1, 25, 2);
    std::ostringstream os;
    write_probe_csv(os, probe);
    int lines = 0;
    for (char c : os.str()) lines += c == '\n';
    CHECK(lines == 1 + static_cast<int>(net.num_bottleneck_layers()) + 1);
}

TEST_CASE("generalization table rows recompute gen_error and sort by (L desc, W desc)") {
    TrainingReport r1, r2, r3;
    r1.final_train_acc = 89.76;
    r1.final_test_acc = 85.70;
    r2.final_train_acc = 80.0;
    r2.final_test_acc = 80.0;
    r3.final_train_acc = 70.0;
    r3.final_test_acc = 65.0;

    std::vector<ReportMeta> metas = {{8, 5, true, &r3}, {32, 9, true, &r1}, {16, 9, false, &r2}};
    const auto rows = generalization_table(metas);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].L == 9);
    CHECK(rows[0].W == 32);
    CHECK(rows[0].gen_error == Approx(4.06).margin(1e-12));
    CHECK(rows[1].gen_error == 0.0);
    CHECK(rows[2].L == 5);

    const std::string text = render_generalization_tables(rows);
    CHECK(text.find("85.70") != std::string::npos);
    CHECK(text.find("4.06") != std::string::npos);
    CHECK_THROWS_AS(generalization_table({}), contract_error);
}
