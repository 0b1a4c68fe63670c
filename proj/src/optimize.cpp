#include "gmr/optimize.hpp"

#include "gmr/error.hpp"
#include "gmr/mesh_io.hpp"
#include "gmr/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace gmr {

namespace {

void check_hyper(const AdamHyper &h, const char *what) {
    const bool ok = std::isfinite(h.lr) && h.lr >= 0.0 && h.beta1 >= 0.0 && h.beta1 < 1.0 &&
                    h.beta2 >= 0.0 && h.beta2 < 1.0 && std::isfinite(h.eps) && h.eps >= 0.0;
    if (!ok) {
        throw ConfigError(std::string(what) + ": need lr >= 0, 0 <= beta < 1, eps >= 0");
    }
}

void check_grads(std::span<const Vec3> grads, std::size_t expected, const char *what) {
    if (grads.size() != expected) {
        throw ShapeError(std::string(what) + ": " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(expected) + " entries");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].allFinite()) {
            throw NonFiniteError(std::string(what) + ": non-finite gradient at vertex " + std::to_string(i) +
                                 "; step rejected");
        }
    }
}

/// Adam bias correction 1 - beta^t.
double bias(double beta, std::uint64_t t) { return 1.0 - std::pow(beta, static_cast<double>(t)); }

} // namespace

VectorAdam::VectorAdam(std::size_t count, AdamHyper hyper)
    : hyper_(hyper), m_(count, Vec3::Zero()), v_(count, 0.0) {
    check_hyper(hyper_, "VectorAdam");
}

std::vector<Vec3> VectorAdam::step(std::span<const Vec3> grads, std::optional<double> lr) {
    check_grads(grads, m_.size(), "VectorAdam");
    const double rate = lr.value_or(hyper_.lr);
    const double b1 = hyper_.beta1;
    const double b2 = hyper_.beta2;
    ++step_;
    const double c1 = bias(b1, step_);
    const double c2 = bias(b2, step_);
    std::vector<Vec3> delta(m_.size());
    for (std::size_t i = 0; i < m_.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].squaredNorm();
        const Vec3 m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        delta[i] = -rate * m_hat / (std::sqrt(v_hat) + hyper_.eps);
    }
    return delta;
}

void VectorAdam::restore(std::uint64_t steps, std::vector<Vec3> m, std::vector<double> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
        throw ShapeError("VectorAdam::restore: state has " + std::to_string(m.size()) + " entries, expected " +
                         std::to_string(m_.size()));
    }
    step_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

ScalarAdam::ScalarAdam(std::size_t count, AdamHyper hyper)
    : hyper_(hyper), m_(count, Vec3::Zero()), v_(count, Vec3::Zero()) {
    check_hyper(hyper_, "ScalarAdam");
}

std::vector<Vec3> ScalarAdam::step(std::span<const Vec3> grads, std::optional<double> lr) {
    check_grads(grads, m_.size(), "ScalarAdam");
    const double rate = lr.value_or(hyper_.lr);
    const double b1 = hyper_.beta1;
    const double b2 = hyper_.beta2;
    ++step_;
    const double c1 = bias(b1, step_);
    const double c2 = bias(b2, step_);
    std::vector<Vec3> delta(m_.size());
    for (std::size_t i = 0; i < m_.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseAbs2();
        for (int k = 0; k < 3; ++k) {
            delta[i][k] = -rate * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + hyper_.eps);
        }
    }
    return delta;
}

void ScalarAdam::restore(std::uint64_t steps, std::vector<Vec3> m, std::vector<Vec3> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
        throw ShapeError("ScalarAdam::restore: state has " + std::to_string(m.size()) + " entries, expected " +
                         std::to_string(m_.size()));
    }
    step_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

void FitConfig::validate() const {
    if (iterations < 0) {
        throw ConfigError("iterations must be >= 0");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    check_hyper(position, "position optimizer");
    check_hyper({color_lr, position.beta1, position.beta2, position.eps}, "color optimizer");
    if (!(final_lr_factor >= 0.0 && final_lr_factor <= 1.0)) {
        throw ConfigError("final_lr_factor must lie in [0, 1]");
    }
    if (checkpoint_every < 0 || cd_every < 0) {
        throw ConfigError("checkpoint_every and cd_every must be >= 0");
    }
    if (checkpoint_every > 0 && checkpoint_dir.empty()) {
        throw ConfigError("checkpoint_every > 0 needs a checkpoint directory");
    }
    weights.validate();
}

double cosine_lr_factor(int it, int total, double final_factor) {
    if (total <= 1) {
        return 1.0;
    }
    const double t = std::clamp(static_cast<double>(it) / static_cast<double>(total - 1), 0.0, 1.0);
    return final_factor + (1.0 - final_factor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

ViewSampler::ViewSampler(std::size_t n, std::uint64_t seed) : n_(n), order_(n), seed_(seed) {
    if (n == 0) {
        throw ConfigError("view sampler needs at least one view");
    }
    reshuffle();
}

void ViewSampler::reshuffle() {
    for (std::size_t i = 0; i < n_; ++i) {
        order_[i] = i;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(epoch_), 0x7e3eu};
    std::mt19937_64 rng(seq);
    // Fisher-Yates by hand: std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = n_ - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(order_[i], order_[j]);
    }
    ++epoch_;
    cursor_ = 0;
}

std::vector<std::size_t> ViewSampler::next(std::size_t batch) {
    batch = std::min(batch, n_);
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
        if (cursor_ == n_) {
            reshuffle();
        }
        const std::size_t v = order_[cursor_++];
        // A batch straddling two epochs must not repeat a view.
        if (std::find(out.begin(), out.end(), v) == out.end()) {
            out.push_back(v);
        }
    }
    return out;
}

TriangleMesh shift_initialization(const TriangleMesh &mesh, const Vec3 &offset) {
    return translate_mesh(mesh, offset);
}

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << std::setprecision(12);
    out << "iteration,total,color,silhouette,edge,laplacian,lr,wall_seconds,chamfer\n";
    for (const auto &r : history) {
        out << r.iteration << "," << r.loss.total << "," << r.loss.color << "," << r.loss.silhouette << ","
            << r.loss.edge << "," << r.loss.laplacian << "," << r.lr << "," << r.wall_seconds << ",";
        if (!std::isnan(r.chamfer)) {
            out << r.chamfer;
        }
        out << "\n";
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

namespace {

constexpr char kStateMagic[8] = {'G', 'M', 'R', 'O', 'P', 'T', '0', '1'};

template <typename T>
void put(std::ostream &out, const T &value) {
    out.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <typename T>
T get(std::istream &in, const std::filesystem::path &path) {
    T value{};
    in.read(reinterpret_cast<char *>(&value), sizeof(T));
    if (!in) {
        throw ParseError(path.string(), 0, "truncated optimizer state");
    }
    return value;
}

void put_vec3s(std::ostream &out, const std::vector<Vec3> &v) {
    for (const Vec3 &x : v) {
        put(out, x.x());
        put(out, x.y());
        put(out, x.z());
    }
}

std::vector<Vec3> get_vec3s(std::istream &in, std::size_t n, const std::filesystem::path &path) {
    std::vector<Vec3> v(n);
    for (auto &x : v) {
        x.x() = get<double>(in, path);
        x.y() = get<double>(in, path);
        x.z() = get<double>(in, path);
    }
    return v;
}

} // namespace

void save_optimizer_state(const VectorAdam &positions, const ScalarAdam &colors,
                          const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(kStateMagic, sizeof(kStateMagic));
    put<std::uint64_t>(out, positions.first_moment().size());
    put<std::uint64_t>(out, positions.steps());
    put<std::uint64_t>(out, colors.steps());
    put_vec3s(out, positions.first_moment());
    for (double v : positions.second_moment()) {
        put(out, v);
    }
    put_vec3s(out, colors.first_moment());
    put_vec3s(out, colors.second_moment());
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void load_optimizer_state(VectorAdam &positions, ScalarAdam &colors, const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    char magic[sizeof(kStateMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0) {
        throw ParseError(path.string(), 0, "not an optimizer state file");
    }
    const auto n = static_cast<std::size_t>(get<std::uint64_t>(in, path));
    const auto pos_steps = get<std::uint64_t>(in, path);
    const auto col_steps = get<std::uint64_t>(in, path);
    auto pm = get_vec3s(in, n, path);
    std::vector<double> pv(n);
    for (double &v : pv) {
        v = get<double>(in, path);
    }
    auto cm = get_vec3s(in, n, path);
    auto cv = get_vec3s(in, n, path);
    positions.restore(pos_steps, std::move(pm), std::move(pv));
    colors.restore(col_steps, std::move(cm), std::move(cv));
}

namespace {

void write_checkpoint(const TriangleMesh &mesh, const VectorAdam &pos, const ScalarAdam &col,
                      const FitConfig &config, int iteration) {
    std::filesystem::create_directories(config.checkpoint_dir);
    std::ostringstream stem;
    stem << "ckpt_" << std::setw(6) << std::setfill('0') << iteration;
    const auto base = config.checkpoint_dir / stem.str();
    save_mesh(mesh, base.string() + ".ply");
    save_optimizer_state(pos, col, base.string() + ".state");
    std::ofstream cfg(base.string() + ".cfg");
    cfg << config.config_snapshot;
    if (!cfg) {
        throw IoError("failed writing " + base.string() + ".cfg");
    }
}

} // namespace

FitResult fit(const TriangleMesh &initial, std::span<const View> views, const FitConfig &config,
              const TriangleMesh *reference, const FitCallback &callback) {
    config.validate();
    if (views.empty()) {
        throw ConfigError("fit needs at least one view");
    }
    validate(initial);

    FitResult result;
    result.mesh = initial;
    if (config.iterations == 0) {
        return result;
    }
    TriangleMesh &mesh = result.mesh;
    const Topology topology = build_topology(mesh);
    const std::size_t nv = mesh.vertices.size();

    VectorAdam pos_opt(nv, config.position);
    ScalarAdam col_opt(nv, {config.color_lr, config.position.beta1, config.position.beta2, config.position.eps});
    ViewSampler sampler(views.size(), config.seed);
    const std::size_t batch = std::min<std::size_t>(config.batch_size, views.size());

    std::vector<Camera> cameras(batch);
    std::vector<const ViewTarget *> targets(batch);
    const auto start = std::chrono::steady_clock::now();
    result.history.reserve(config.iterations);

    for (int it = 0; it < config.iterations; ++it) {
        const double factor = cosine_lr_factor(it, config.iterations, config.final_lr_factor);
        const auto picked = sampler.next(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            cameras[b] = views[picked[b]].camera;
            targets[b] = &views[picked[b]].target;
        }

        HistoryRow row;
        row.iteration = it;
        row.lr = config.position.lr * factor;
        row.chamfer = std::numeric_limits<double>::quiet_NaN();
        try {
            LossResult loss = total_loss(mesh, topology, cameras, targets, config.weights, config.render);
            if (!std::isfinite(loss.report.total)) {
                throw NonFiniteError("loss is not finite");
            }
            const auto dpos = pos_opt.step(loss.grad_vertices, row.lr);
            for (std::size_t v = 0; v < nv; ++v) {
                mesh.vertices[v] += dpos[v];
            }
            if (config.optimize_colors) {
                const auto dcol = col_opt.step(loss.grad_colors, config.color_lr * factor);
                for (std::size_t v = 0; v < nv; ++v) {
                    mesh.colors[v] = (mesh.colors[v] + dcol[v]).cwiseMax(0.0).cwiseMin(1.0);
                }
            }
            row.loss = std::move(loss.report);

            const int done = it + 1;
            if (reference != nullptr && config.cd_every > 0 &&
                (done % config.cd_every == 0 || done == config.iterations)) {
                row.chamfer = chamfer_distance(mesh, *reference, config.cd_samples, config.seed);
            }
            if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
                write_checkpoint(mesh, pos_opt, col_opt, config, done);
            }
        } catch (const Error &e) {
            throw Error("fit failed at iteration " + std::to_string(it) + ": " + e.what());
        }
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(row);
        if (callback && !callback(result.history.back(), mesh)) {
            break;
        }
    }
    return result;
}

} // namespace gmr
