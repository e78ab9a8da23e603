#include "cbnn/persistence.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "cbnn/error.hpp"
#include "json.hpp"

namespace cbnn {
namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'C', 'B', 'N', 'N'};

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
    std::size_t size() const { return bytes_.size(); }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, const std::filesystem::path& source)
        : bytes_(bytes), source_(source) {}

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
        }
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
        }
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw ChecksumError("checkpoint file is truncated", source_);
        }
    }

    std::span<const std::uint8_t> bytes_;
    const std::filesystem::path& source_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes a uInt length; feed large payloads in chunks.
    constexpr std::size_t kChunk = std::size_t{1} << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const std::size_t n = std::min(kChunk, bytes.size() - off);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StorageError("cannot open file", path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw StorageError("cannot open file for writing", path);
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) {
        throw StorageError("failed writing file", path);
    }
}

// ---------------------------------------------------------------- manifest

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

json to_json(const BoostConfig& c) {
    return {{"eta", c.eta},
            {"iterations_per_checkpoint", c.iterations_per_checkpoint},
            {"total_iterations", c.total_iterations},
            {"num_classes", c.num_classes},
            {"lambda0", optional_number(c.lambda0)},
            {"error_floor", optional_number(c.error_floor)}};
}

BoostConfig boost_from_json(const json& j) {
    BoostConfig c;
    c.eta = j.at("eta").get<double>();
    c.iterations_per_checkpoint = j.at("iterations_per_checkpoint").get<std::size_t>();
    c.total_iterations = j.at("total_iterations").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.lambda0 = read_optional(j, "lambda0");
    c.error_floor = read_optional(j, "error_floor");
    return c;
}

json to_json(const LearnerSettings& s) {
    return {{"hidden", s.hidden},
            {"l2", s.l2},
            {"batch_size", s.batch_size},
            {"base_rate", s.base_rate},
            {"decay_factor", s.decay_factor},
            {"decay_every_epochs", s.decay_every_epochs},
            {"warmup_epochs", s.warmup_epochs}};
}

LearnerSettings learner_from_json(const json& j) {
    LearnerSettings s;
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.l2 = j.at("l2").get<double>();
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.base_rate = j.at("base_rate").get<double>();
    s.decay_factor = j.at("decay_factor").get<double>();
    s.decay_every_epochs = j.at("decay_every_epochs").get<std::size_t>();
    s.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
    return s;
}

json to_json(const CheckpointMetrics& m) {
    return {{"file", checkpoint_filename(m.index)},
            {"index", m.index},
            {"step", m.step},
            {"error", m.error},
            {"lambda", m.lambda},
            {"z", m.z},
            {"lambda_sum", m.lambda_sum},
            {"train_error", m.train_error},
            {"test_error", optional_number(m.test_error)},
            {"ensemble_train_error", m.ensemble_train_error},
            {"ensemble_test_error", optional_number(m.ensemble_test_error)},
            {"loss_bound", m.loss_bound},
            {"exp_loss", m.exp_loss},
            {"final", m.is_final}};
}

CheckpointMetrics metrics_from_json(const json& j) {
    CheckpointMetrics m;
    m.index = j.at("index").get<std::size_t>();
    m.step = j.at("step").get<std::size_t>();
    m.error = j.at("error").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.z = j.at("z").get<double>();
    m.lambda_sum = j.at("lambda_sum").get<double>();
    m.train_error = j.at("train_error").get<double>();
    m.test_error = read_optional(j, "test_error");
    m.ensemble_train_error = j.at("ensemble_train_error").get<double>();
    m.ensemble_test_error = read_optional(j, "ensemble_test_error");
    m.loss_bound = j.at("loss_bound").get<double>();
    m.exp_loss = j.at("exp_loss").get<double>();
    m.is_final = j.at("final").get<bool>();
    return m;
}

json manifest_json(const RunRecord& r) {
    json checkpoints = json::array();
    for (const auto& m : r.checkpoints) {
        checkpoints.push_back(to_json(m));
    }
    json rejected = json::array();
    for (const auto& x : r.rejected) {
        rejected.push_back({{"step", x.step}, {"error", x.error}});
    }
    json dataset = r.dataset_descriptor;
    if (!r.dataset_descriptor.empty()) {
        auto parsed = json::parse(r.dataset_descriptor, nullptr, false);
        if (!parsed.is_discarded() && parsed.dump() == r.dataset_descriptor) {
            dataset = std::move(parsed);
        }
    }
    return {{"format", "cbnn-run"},
            {"version", kManifestVersion},
            {"method", to_string(r.method)},
            {"seed", r.seed},
            {"boost", to_json(r.config)},
            {"learner", to_json(r.learner)},
            {"lambda0", r.lambda0},
            {"error_floor", r.error_floor},
            {"n_train", r.n_train},
            {"input_dim", r.input_dim},
            {"total_iterations", r.total_iterations},
            {"dataset", dataset},
            {"checkpoints", checkpoints},
            {"rejected", rejected},
            {"z_history", r.z_history},
            {"final_weights", r.final_weights}};
}

struct ParsedManifest {
    RunRecord record;
    std::vector<std::string> files;
};

ParsedManifest record_from_json(const json& j) {
    if (j.at("format").get<std::string>() != "cbnn-run") {
        throw std::runtime_error("not a cbnn run manifest");
    }
    if (j.at("version").get<int>() != kManifestVersion) {
        throw std::runtime_error("unsupported manifest version");
    }
    ParsedManifest out;
    RunRecord& r = out.record;
    r.method = parse_method(j.at("method").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = boost_from_json(j.at("boost"));
    r.learner = learner_from_json(j.at("learner"));
    r.lambda0 = j.at("lambda0").get<double>();
    r.error_floor = j.at("error_floor").get<double>();
    r.n_train = j.at("n_train").get<std::size_t>();
    r.input_dim = j.at("input_dim").get<std::size_t>();
    r.total_iterations = j.at("total_iterations").get<std::size_t>();
    const auto& dataset = j.at("dataset");
    r.dataset_descriptor = dataset.is_string() ? dataset.get<std::string>() : dataset.dump();
    for (const auto& m : j.at("checkpoints")) {
        r.checkpoints.push_back(metrics_from_json(m));
        out.files.push_back(m.at("file").get<std::string>());
    }
    for (const auto& x : j.at("rejected")) {
        r.rejected.push_back({x.at("step").get<std::size_t>(), x.at("error").get<double>()});
    }
    r.z_history = j.at("z_history").get<std::vector<double>>();
    r.final_weights = j.at("final_weights").get<std::vector<double>>();
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointRecord& record) {
    validate(record.params);
    Writer w;
    w.u8(kCheckpointVersion);
    w.raw(kMagic, sizeof kMagic);
    w.u32(static_cast<std::uint32_t>(record.params.layer_sizes.size()));
    for (std::size_t s : record.params.layer_sizes) {
        w.u64(s);
    }
    w.f64(record.params.l2);
    w.f64(record.lambda);
    w.f64(record.error);
    w.f64(record.z);
    w.u64(record.step);
    w.u64(record.seed);
    w.u8(record.is_final ? 1 : 0);
    w.u64(record.params.values.size());
    const std::size_t payload_start = w.size();
    for (double v : record.params.values) {
        w.f64(v);
    }
    const auto& bytes = w.bytes();
    const std::uint32_t crc =
        crc_of(std::span<const std::uint8_t>(bytes.data() + payload_start, bytes.size() - payload_start));
    w.u32(crc);
    return std::move(w.bytes());
}

CheckpointRecord decode_checkpoint(std::span<const std::uint8_t> bytes, const std::filesystem::path& source) {
    Reader r(bytes, source);
    const std::uint8_t version = r.u8();
    if (version != kCheckpointVersion) {
        throw UnsupportedVersion("unsupported checkpoint version " + std::to_string(version), source);
    }
    const auto magic = r.take(sizeof kMagic);
    if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) {
        throw ChecksumError("bad checkpoint magic", source);
    }
    CheckpointRecord rec;
    const std::uint32_t n_sizes = r.u32();
    if (n_sizes < 2 || n_sizes > r.remaining() / 8) {
        throw ShapeMismatch("invalid architecture descriptor", source);
    }
    for (std::uint32_t i = 0; i < n_sizes; ++i) {
        rec.params.layer_sizes.push_back(r.u64());
    }
    rec.params.l2 = r.f64();
    rec.lambda = r.f64();
    rec.error = r.f64();
    rec.z = r.f64();
    rec.step = r.u64();
    rec.seed = r.u64();
    rec.is_final = r.u8() != 0;
    const std::uint64_t count = r.u64();
    std::size_t expected = 0;
    try {
        expected = parameter_count(rec.params.layer_sizes);
    } catch (const std::invalid_argument&) {
        throw ShapeMismatch("invalid architecture descriptor", source);
    }
    if (count != expected) {
        throw ShapeMismatch("payload length " + std::to_string(count) + " does not match architecture (" +
                                std::to_string(expected) + " parameters)",
                            source);
    }
    if (count > r.remaining() / 8) {
        throw ChecksumError("checkpoint file is truncated", source);
    }
    const auto payload = r.take(count * 8);
    const std::uint32_t stored = r.u32();
    if (r.remaining() != 0) {
        throw ChecksumError("trailing bytes after checkpoint", source);
    }
    if (crc_of(payload) != stored) {
        throw ChecksumError("checkpoint checksum mismatch", source);
    }
    Reader pr(payload, source);
    rec.params.values.resize(count);
    for (auto& v : rec.params.values) {
        v = pr.f64();
    }
    return rec;
}

void save_checkpoint(const CheckpointRecord& record, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(record);
    write_file(path, bytes.data(), bytes.size());
}

CheckpointRecord load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return decode_checkpoint(bytes, path);
}

std::string checkpoint_filename(std::size_t index) { return "ckpt_" + std::to_string(index) + ".bin"; }

std::string manifest_text(const RunRecord& record) { return manifest_json(record).dump(2) + "\n"; }

void save_run(const RunResult& run, const std::filesystem::path& dir) {
    if (run.ensemble.size() != run.record.checkpoints.size()) {
        throw std::invalid_argument("save_run: ensemble and record disagree on the checkpoint count");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw StorageError("cannot create run directory (" + ec.message() + ")", dir);
    }
    for (std::size_t m = 0; m < run.ensemble.size(); ++m) {
        save_checkpoint(run.ensemble.checkpoints()[m], dir / checkpoint_filename(m + 1));
    }
    const std::string text = manifest_text(run.record);
    write_file(dir / "manifest", text.data(), text.size());
    const std::string timing = json{{"segment_seconds", run.record.segment_seconds}}.dump(2) + "\n";
    write_file(dir / "timing.json", timing.data(), timing.size());
}

RunResult load_run(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest";
    const auto bytes = read_file(manifest_path);
    ParsedManifest parsed;
    try {
        parsed = record_from_json(json::parse(bytes.begin(), bytes.end()));
    } catch (const StorageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StorageError(std::string("malformed manifest (") + e.what() + ")", manifest_path);
    }
    RunRecord& record = parsed.record;
    const auto timing_path = dir / "timing.json";
    if (std::filesystem::exists(timing_path)) {
        const auto tb = read_file(timing_path);
        const auto tj = json::parse(tb.begin(), tb.end(), nullptr, false);
        if (!tj.is_discarded() && tj.contains("segment_seconds")) {
            record.segment_seconds = tj.at("segment_seconds").get<std::vector<double>>();
        }
    }
    std::vector<CheckpointRecord> members;
    for (const auto& file : parsed.files) {
        if (std::filesystem::path(file).filename() != std::filesystem::path(file)) {
            throw StorageError("checkpoint reference '" + file + "' must be a plain file name", manifest_path);
        }
        const auto path = dir / file;
        if (!std::filesystem::exists(path)) {
            throw DanglingReference("manifest references a missing checkpoint", path);
        }
        members.push_back(load_checkpoint(path));
    }
    if (members.empty()) {
        throw StorageError("manifest lists no checkpoints", manifest_path);
    }
    return RunResult{EnsembleModel(std::move(members)), std::move(record)};
}

}  // namespace cbnn
