#include "stam/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace stam {

namespace {

constexpr char kMagic[5] = {'S', 'T', 'A', 'M', '1'};

struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

void write_entry(std::ostream& os, const std::string& name, const Shape& shape,
                 const std::vector<double>& values) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<Entry> config_entries(const ModelConfig& cfg) {
    std::vector<Entry> out;
    auto scalar = [&](const std::string& name, double v) {
        out.push_back({name, {1}, {v}});
    };
    scalar("config.format_version", 1.0);
    scalar("config.variant", static_cast<double>(static_cast<int>(cfg.variant)));
    scalar("config.frame_h", cfg.frame_h);
    scalar("config.frame_w", cfg.frame_w);
    scalar("config.classes", cfg.classes);
    scalar("config.seq_len", cfg.seq_len);
    scalar("config.heads", cfg.heads);
    scalar("config.proj_dim", cfg.proj_dim);
    scalar("config.classifier_hidden", cfg.classifier_hidden);
    Entry ch;
    ch.name = "config.channels";
    ch.shape = {static_cast<int>(cfg.channels.size())};
    for (int c : cfg.channels) ch.values.push_back(c);
    out.push_back(std::move(ch));
    return out;
}

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    void bytes(void* dst, std::size_t n) {
        is_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw CheckpointTruncatedError("checkpoint: unexpected end of file");
        }
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

private:
    std::istream& is_;
};

Entry read_entry(Reader& r) {
    Entry e;
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096) throw CheckpointMismatchError("checkpoint: unreasonable name length");
    e.name.resize(name_len);
    r.bytes(e.name.data(), name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointMismatchError("checkpoint: unreasonable tensor rank");
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t d = r.u32();
        if (d == 0 || d > (1u << 24)) throw CheckpointMismatchError("checkpoint: bad extent");
        e.shape.push_back(static_cast<int>(d));
        count *= d;
    }
    e.values.resize(count);
    r.bytes(e.values.data(), count * sizeof(double));
    return e;
}

int config_int(const std::map<std::string, Entry>& entries, const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) {
        throw CheckpointMismatchError("checkpoint: missing " + name);
    }
    if (it->second.values.size() != 1) {
        throw CheckpointMismatchError("checkpoint: " + name + " must be scalar");
    }
    return static_cast<int>(it->second.values[0]);
}

}  // namespace

void save_checkpoint(const StamParams& params, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("checkpoint: cannot open " + tmp.string() + " for writing");
        os.write(kMagic, 5);
        const auto cfg = config_entries(params.config);
        const auto named = params.named();
        write_u32(os, static_cast<std::uint32_t>(cfg.size() + named.size()));
        for (const auto& e : cfg) write_entry(os, e.name, e.shape, e.values);
        for (const auto& [name, t] : named) write_entry(os, name, t->shape, t->values);
        if (!os) throw IoError("checkpoint: write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint: rename to " + path.string() + " failed: " + ec.message());
}

StamParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInputError("checkpoint: cannot open " + path.string());
    Reader r(is);
    char magic[5];
    r.bytes(magic, 5);
    if (std::memcmp(magic, kMagic, 5) != 0) {
        throw CheckpointMagicError("checkpoint: bad magic in " + path.string());
    }
    const std::uint32_t count = r.u32();
    std::map<std::string, Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e = read_entry(r);
        if (!entries.emplace(e.name, std::move(e)).second) {
            throw CheckpointMismatchError("checkpoint: duplicate tensor name");
        }
    }
    if (!r.at_eof()) throw CheckpointMismatchError("checkpoint: trailing bytes after manifest");

    ModelConfig cfg;
    cfg.variant = static_cast<Variant>(config_int(entries, "config.variant"));
    cfg.frame_h = config_int(entries, "config.frame_h");
    cfg.frame_w = config_int(entries, "config.frame_w");
    cfg.classes = config_int(entries, "config.classes");
    cfg.seq_len = config_int(entries, "config.seq_len");
    cfg.heads = config_int(entries, "config.heads");
    cfg.proj_dim = config_int(entries, "config.proj_dim");
    cfg.classifier_hidden = config_int(entries, "config.classifier_hidden");
    auto chit = entries.find("config.channels");
    if (chit == entries.end()) throw CheckpointMismatchError("checkpoint: missing config.channels");
    cfg.channels.clear();
    for (double v : chit->second.values) cfg.channels.push_back(static_cast<int>(v));

    StamParams params = init_params(cfg, 0);
    std::size_t used = config_entries(cfg).size();
    for (const auto& [name, t] : params.named()) {
        auto it = entries.find(name);
        if (it == entries.end()) {
            throw CheckpointMismatchError("checkpoint: missing tensor " + name);
        }
        if (it->second.shape != t->shape) {
            throw CheckpointMismatchError("checkpoint: shape mismatch for " + name + ": file has " +
                                          shape_str(it->second.shape) + ", model expects " +
                                          shape_str(t->shape));
        }
        t->values = it->second.values;
        ++used;
    }
    if (used != entries.size()) {
        throw CheckpointMismatchError("checkpoint: file carries tensors the model does not know");
    }
    return params;
}

}  // namespace stam
