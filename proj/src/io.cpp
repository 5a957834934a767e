#include "fusenet/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fusenet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace fs = std::filesystem;

namespace fusenet {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // trim to the shortest representation that round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof probe, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(probe, "%lf", &back);
        if (back == v) return probe;
    }
    return buf;
}

std::string join_modalities(const std::vector<std::string>& modalities) {
    std::string out;
    for (std::size_t i = 0; i < modalities.size(); ++i) {
        if (i) out += "+";
        out += modalities[i];
    }
    return out;
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failure on " + path);
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.good()) throw IoError("write failure on " + path);
}

void append_doubles(std::string& bytes, const std::vector<double>& v) {
    const std::size_t off = bytes.size();
    bytes.resize(off + v.size() * sizeof(double));
    std::memcpy(bytes.data() + off, v.data(), v.size() * sizeof(double));
}

// Parses an unsigned decimal token; returns false on any non-digit.
bool parse_size(const std::string& tok, std::size_t& out) {
    if (tok.empty()) return false;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc() && ptr == tok.data() + tok.size();
}

struct MmimgHeader {
    std::size_t width = 0, height = 0, header_len = 0;
};

MmimgHeader parse_mmimg_header(const std::string& bytes, const std::string& path) {
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string::npos || nl > 64)
        throw ParseError(path + ": missing MMIMG header line", 0);
    std::istringstream line(bytes.substr(0, nl));
    std::string magic, version, wtok, htok, extra;
    line >> magic >> version >> wtok >> htok;
    if (magic != "MMIMG") throw ParseError(path + ": bad magic '" + magic + "'", 0);
    if (version != "1")
        throw ParseError(path + ": unsupported version '" + version + "'",
                         static_cast<long long>(bytes.find(version)));
    MmimgHeader h;
    if (!parse_size(wtok, h.width) || !parse_size(htok, h.height) || h.width == 0 || h.height == 0
        || (line >> extra))
        throw ParseError(path + ": malformed header '" + bytes.substr(0, nl) + "'", 0);
    h.header_len = nl + 1;
    const std::size_t want = h.header_len + 8 * h.width * h.height;
    if (bytes.size() < want)
        throw ParseError(path + ": payload truncated (" + std::to_string(bytes.size() - h.header_len)
                             + " of " + std::to_string(8 * h.width * h.height) + " bytes)",
                         static_cast<long long>(bytes.size()));
    if (bytes.size() > want)
        throw ParseError(path + ": trailing data after payload", static_cast<long long>(want));
    return h;
}

} // namespace

Image read_image(const std::string& path) {
    std::string bytes = read_file(path);
    MmimgHeader h = parse_mmimg_header(bytes, path);
    Image img(h.height, h.width);
    std::memcpy(img.v.data(), bytes.data() + h.header_len, 8 * img.v.size());
    return img;
}

void write_image(const std::string& path, const Image& img) {
    if (img.h == 0 || img.w == 0) throw PreconditionError("write_image: empty image");
    std::string bytes = "MMIMG 1 " + std::to_string(img.w) + " " + std::to_string(img.h) + "\n";
    append_doubles(bytes, img.v);
    write_file(path, bytes);
}

Mask read_mask(const std::string& path) {
    std::string bytes = read_file(path);
    MmimgHeader h = parse_mmimg_header(bytes, path);
    Mask mask(h.height, h.width);
    for (std::size_t i = 0; i < mask.v.size(); ++i) {
        double v;
        std::memcpy(&v, bytes.data() + h.header_len + 8 * i, 8);
        if (v != 0.0 && v != 1.0)
            throw ParseError(path + ": mask value " + fmt_double(v) + " outside {0,1}",
                             static_cast<long long>(h.header_len + 8 * i));
        mask.v[i] = v == 1.0 ? 1 : 0;
    }
    return mask;
}

void write_mask(const std::string& path, const Mask& mask) {
    if (mask.h == 0 || mask.w == 0) throw PreconditionError("write_mask: empty mask");
    std::string bytes = "MMIMG 1 " + std::to_string(mask.w) + " " + std::to_string(mask.h) + "\n";
    std::vector<double> v(mask.v.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask.v[i] ? 1.0 : 0.0;
    append_doubles(bytes, v);
    write_file(path, bytes);
}

void write_heatmap(const std::string& path, const Heatmap& heat) {
    Image img(heat.h, heat.w);
    img.v = heat.v;
    write_image(path, img);
}

Heatmap read_heatmap(const std::string& path) {
    Image img = read_image(path);
    Heatmap heat("", img.h, img.w);
    for (std::size_t i = 0; i < img.v.size(); ++i) {
        if (img.v[i] < 0.0 || img.v[i] > 1.0)
            throw ParseError(path + ": probability " + fmt_double(img.v[i]) + " outside [0,1]",
                             static_cast<long long>(8 * i));
        heat.v[i] = img.v[i];
    }
    return heat;
}

namespace {

std::string pgm_header(std::size_t w, std::size_t h) {
    return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

} // namespace

void write_labelmap_pgm(const std::string& path, const Labelmap& lab) {
    if (lab.h == 0 || lab.w == 0) throw PreconditionError("write_labelmap: empty labelmap");
    std::string bytes = pgm_header(lab.w, lab.h);
    for (std::uint8_t v : lab.v) bytes.push_back(v ? static_cast<char>(255) : 0);
    write_file(path, bytes);
}

Labelmap read_labelmap_pgm(const std::string& path) {
    std::string bytes = read_file(path);
    // token scanner over the header: P5, width, height, maxval; '#'
    // comments run to end of line
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            char ch = bytes[pos];
            if (ch == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    std::string magic = next_token();
    if (magic != "P5") throw ParseError(path + ": not a binary graymap (magic '" + magic + "')", 0);
    std::size_t w = 0, h = 0, maxval = 0;
    std::string wtok = next_token(), htok = next_token(), mtok = next_token();
    if (!parse_size(wtok, w) || !parse_size(htok, h) || !parse_size(mtok, maxval) || w == 0
        || h == 0)
        throw ParseError(path + ": malformed graymap header", static_cast<long long>(pos));
    if (maxval != 255)
        throw ParseError(path + ": expected maxval 255, got " + mtok,
                         static_cast<long long>(pos));
    ++pos; // single whitespace byte after maxval
    if (bytes.size() - pos != w * h)
        throw ParseError(path + ": pixel payload is " + std::to_string(bytes.size() - pos)
                             + " bytes, expected " + std::to_string(w * h),
                         static_cast<long long>(bytes.size()));
    Labelmap lab("", h, w);
    for (std::size_t i = 0; i < w * h; ++i) {
        unsigned char v = static_cast<unsigned char>(bytes[pos + i]);
        if (v != 0 && v != 255)
            throw ParseError(path + ": pixel value " + std::to_string(v) + " outside {0,255}",
                             static_cast<long long>(pos + i));
        lab.v[i] = v ? 1 : 0;
    }
    return lab;
}

void write_heatmap_pgm(const std::string& path, const Heatmap& heat) {
    if (heat.h == 0 || heat.w == 0) throw PreconditionError("write_heatmap: empty heatmap");
    std::string bytes = pgm_header(heat.w, heat.h);
    for (double p : heat.v) {
        double scaled = std::lround(std::min(1.0, std::max(0.0, p)) * 255.0);
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(scaled)));
    }
    write_file(path, bytes);
}

// ---- model persistence ----

namespace {

std::string layer_line(const LayerSpec& l) {
    switch (l.kind) {
    case LayerKind::Conv:
        return "conv " + std::to_string(l.kh) + " " + std::to_string(l.kw) + " "
               + std::to_string(l.filters);
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Dense: return "dense " + std::to_string(l.units);
    case LayerKind::SoftmaxOutput: return "softmax";
    }
    return "?";
}

LayerSpec parse_layer_line(const std::string& line, const std::string& path, long long offset) {
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    auto want_sizes = [&](int n, std::size_t* a, std::size_t* b, std::size_t* c) {
        std::size_t* slots[3] = {a, b, c};
        for (int i = 0; i < n; ++i) {
            std::string tok;
            if (!(ss >> tok) || !parse_size(tok, *slots[i]))
                throw ParseError(path + ": malformed layer line '" + line + "'", offset);
        }
        std::string extra;
        if (ss >> extra) throw ParseError(path + ": malformed layer line '" + line + "'", offset);
    };
    if (kind == "conv") {
        std::size_t kh, kw, f;
        want_sizes(3, &kh, &kw, &f);
        return LayerSpec::conv(kh, kw, f);
    }
    if (kind == "dense") {
        std::size_t u;
        want_sizes(1, &u, nullptr, nullptr);
        return LayerSpec::dense(u);
    }
    want_sizes(0, nullptr, nullptr, nullptr);
    if (kind == "maxpool") return LayerSpec::maxpool();
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "sigmoid") return LayerSpec::sigmoid();
    if (kind == "softmax") return LayerSpec::softmax_output();
    throw ParseError(path + ": unknown layer kind '" + kind + "'", offset);
}

void check_part_structure(const TrainedNetwork& net, const std::string& path) {
    const std::size_t k = net.modalities.size();
    std::size_t want = 0;
    switch (net.scheme) {
    case FusionScheme::Single: want = 1; break;
    case FusionScheme::Type1: want = 1; break;
    case FusionScheme::Type2: want = k + 1; break;
    case FusionScheme::Type3: want = k; break;
    }
    if (net.parts.size() != want)
        throw ParseError(path + ": " + std::string(scheme_name(net.scheme)) + " model with "
                             + std::to_string(k) + " modalities needs " + std::to_string(want)
                             + " parts, found " + std::to_string(net.parts.size()),
                         0);
    for (std::size_t p = 0; p < net.parts.size(); ++p) {
        const Shape& in = net.parts[p].spec.input;
        const bool head = net.scheme == FusionScheme::Type2 && p == k;
        if (head) continue;
        std::size_t depth = net.scheme == FusionScheme::Type1 ? k : 1;
        if (in[0] != net.patch || in[1] != net.patch || in[2] != depth)
            throw ParseError(path + ": part '" + net.parts[p].name + "' input " + shape_str(in)
                                 + " does not match a " + std::to_string(net.patch) + "-pixel, depth-"
                                 + std::to_string(depth) + " patch",
                             0);
    }
}

} // namespace

void save_model(const std::string& path, const TrainedNetwork& net) {
    if (net.parts.empty()) throw PreconditionError("save_model: network has no parts");
    std::string out = "FUSENET-MODEL 1\n";
    out += "scheme " + std::string(scheme_name(net.scheme)) + "\n";
    out += "patch " + std::to_string(net.patch) + "\n";
    out += "modalities " + std::to_string(net.modalities.size());
    for (const std::string& m : net.modalities) out += " " + m;
    out += "\nparts " + std::to_string(net.parts.size()) + "\n";
    for (const SubNet& part : net.parts) {
        out += "part " + part.name + " " + std::to_string(part.spec.input[0]) + " "
               + std::to_string(part.spec.input[1]) + " " + std::to_string(part.spec.input[2])
               + " " + std::to_string(part.spec.layers.size()) + "\n";
        for (const LayerSpec& l : part.spec.layers) out += layer_line(l) + "\n";
    }
    out += "end\n";
    for (const SubNet& part : net.parts)
        for (const LayerParams& lp : part.params.layers) {
            append_doubles(out, lp.w.data);
            append_doubles(out, lp.b.data);
        }
    write_file(path, out);
}

TrainedNetwork load_model(const std::string& path) {
    std::string bytes = read_file(path);

    // descriptor lines up to "end"
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos)
            throw ParseError(path + ": descriptor ends without 'end'",
                             static_cast<long long>(pos));
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    if (next_line() != "FUSENET-MODEL 1")
        throw ParseError(path + ": not a FUSENET-MODEL version 1 file", 0);

    TrainedNetwork net;
    std::string line = next_line();
    {
        std::istringstream ss(line);
        std::string key, val;
        ss >> key >> val;
        if (key != "scheme") throw ParseError(path + ": expected scheme line", 0);
        net.scheme = scheme_from_name(val);
    }
    line = next_line();
    {
        std::istringstream ss(line);
        std::string key, val;
        ss >> key >> val;
        if (key != "patch" || !parse_size(val, net.patch) || net.patch == 0)
            throw ParseError(path + ": expected patch line, got '" + line + "'", 0);
    }
    line = next_line();
    {
        std::istringstream ss(line);
        std::string key, ktok;
        ss >> key >> ktok;
        std::size_t k = 0;
        if (key != "modalities" || !parse_size(ktok, k) || k == 0)
            throw ParseError(path + ": expected modalities line, got '" + line + "'", 0);
        for (std::size_t i = 0; i < k; ++i) {
            std::string m;
            if (!(ss >> m))
                throw ParseError(path + ": modality list shorter than its count", 0);
            net.modalities.push_back(m);
        }
    }
    std::size_t nparts = 0;
    line = next_line();
    {
        std::istringstream ss(line);
        std::string key, val;
        ss >> key >> val;
        if (key != "parts" || !parse_size(val, nparts) || nparts == 0)
            throw ParseError(path + ": expected parts line, got '" + line + "'", 0);
    }
    for (std::size_t p = 0; p < nparts; ++p) {
        line = next_line();
        std::istringstream ss(line);
        std::string key, name, htok, wtok, dtok, ltok;
        ss >> key >> name >> htok >> wtok >> dtok >> ltok;
        std::size_t h, w, d, nlayers;
        if (key != "part" || !parse_size(htok, h) || !parse_size(wtok, w) || !parse_size(dtok, d)
            || !parse_size(ltok, nlayers) || nlayers == 0)
            throw ParseError(path + ": malformed part line '" + line + "'", 0);
        SubNet part;
        part.name = name;
        part.spec.input = {h, w, d};
        for (std::size_t li = 0; li < nlayers; ++li)
            part.spec.layers.push_back(
                parse_layer_line(next_line(), path, static_cast<long long>(pos)));
        net.parts.push_back(std::move(part));
    }
    if (next_line() != "end")
        throw ParseError(path + ": descriptor not terminated by 'end'",
                         static_cast<long long>(pos));
    check_part_structure(net, path);

    // shapes from the specs; then the payload must fit exactly
    std::size_t total = 0;
    for (SubNet& part : net.parts) {
        try {
            total += param_count(part.spec);
        } catch (const PreconditionError& e) {
            throw ParseError(path + ": part '" + part.name + "' has an invalid layer chain: "
                                 + e.what(),
                             static_cast<long long>(pos));
        }
    }
    const std::size_t payload = bytes.size() - pos;
    if (payload != 8 * total)
        throw ParseError(path + ": parameter payload is " + std::to_string(payload)
                             + " bytes, expected " + std::to_string(8 * total),
                         static_cast<long long>(pos));

    for (SubNet& part : net.parts) {
        part.params = init_params(part.spec, 0);
        for (LayerParams& lp : part.params.layers) {
            std::memcpy(lp.w.data.data(), bytes.data() + pos, 8 * lp.w.numel());
            pos += 8 * lp.w.numel();
            std::memcpy(lp.b.data.data(), bytes.data() + pos, 8 * lp.b.numel());
            pos += 8 * lp.b.numel();
            lp.vw.fill(0.0);
            lp.vb.fill(0.0);
            check_finite(lp.w, path + ": stored weights");
            check_finite(lp.b, path + ": stored biases");
        }
    }
    return net;
}

// ---- cohort directories ----

void write_cohort(const std::string& dir, const std::vector<SubjectVolume>& cohort) {
    if (cohort.empty()) throw PreconditionError("write_cohort: empty cohort");
    for (const SubjectVolume& v : cohort) {
        validate_volume(v);
        fs::path subject = fs::path(dir) / v.id;
        std::error_code ec;
        fs::create_directories(subject, ec);
        if (ec) throw IoError("cannot create " + subject.string());
        for (std::size_t m = 0; m < v.modalities.size(); ++m)
            write_image((subject / (v.modalities[m] + ".mmimg")).string(), v.planes[m]);
        write_mask((subject / "mask.mmimg").string(), v.mask);
    }
}

SubjectVolume load_subject(const std::string& dir) {
    fs::path p(dir);
    if (!fs::is_directory(p)) throw IoError("subject directory " + dir + " does not exist");
    SubjectVolume v;
    v.id = p.filename().string();
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(p)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".mmimg") continue;
        std::string stem = entry.path().stem().string();
        if (stem != "mask") names.push_back(stem);
    }
    if (names.empty()) throw IoError("subject " + dir + " has no modality images");
    std::sort(names.begin(), names.end());
    for (const std::string& name : names) {
        Image img = read_image((p / (name + ".mmimg")).string());
        if (v.planes.empty()) {
            v.h = img.h;
            v.w = img.w;
        }
        v.modalities.push_back(name);
        v.planes.push_back(std::move(img));
    }
    fs::path mask_path = p / "mask.mmimg";
    if (!fs::exists(mask_path)) throw IoError("subject " + dir + " is missing mask.mmimg");
    v.mask = read_mask(mask_path.string());
    validate_volume(v);
    return v;
}

std::vector<SubjectVolume> load_cohort(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("cohort directory " + dir + " does not exist");
    std::vector<std::string> subjects;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) subjects.push_back(entry.path().string());
    if (subjects.empty()) throw IoError("cohort directory " + dir + " has no subjects");
    std::sort(subjects.begin(), subjects.end());

    std::vector<SubjectVolume> cohort;
    cohort.reserve(subjects.size());
    for (const std::string& s : subjects) cohort.push_back(load_subject(s));
    for (std::size_t i = 1; i < cohort.size(); ++i)
        if (cohort[i].modalities != cohort[0].modalities)
            throw PreconditionError("cohort: subject " + cohort[i].id
                                    + " has modality set {" + join_modalities(cohort[i].modalities)
                                    + "}, subject " + cohort[0].id + " has {"
                                    + join_modalities(cohort[0].modalities) + "}");
    return cohort;
}

// ---- run configuration ----

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        std::string item = trim(s.substr(pos, comma - pos));
        if (!item.empty()) out.push_back(item);
        pos = comma + 1;
    }
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& val) {
    std::size_t n;
    if (!parse_size(val, n))
        throw PreconditionError("config: " + key + " must be a non-negative integer, got '" + val
                                + "'");
    return n;
}

double parse_real(const std::string& key, const std::string& val) {
    try {
        std::size_t used = 0;
        double d = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw PreconditionError("config: " + key + " must be a number, got '" + val + "'");
    }
}

bool parse_flag(const std::string& key, const std::string& val) {
    if (val == "true") return true;
    if (val == "false") return false;
    throw PreconditionError("config: " + key + " must be true or false, got '" + val + "'");
}

ModalityContrast parse_contrast(const std::string& key, const std::string& val) {
    std::vector<std::string> parts = split_list(val);
    if (parts.size() != 4)
        throw PreconditionError("config: " + key
                                + " expects 'background,tumor,core,sigma', got '" + val + "'");
    ModalityContrast c;
    c.background = parse_real(key, parts[0]);
    c.tumor = parse_real(key, parts[1]);
    c.core = parse_real(key, parts[2]);
    c.sigma = parse_real(key, parts[3]);
    return c;
}

} // namespace

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);

    RunConfig rc;
    std::vector<std::pair<std::string, ModalityContrast>> contrast_overrides;
    std::vector<std::pair<std::string, Corruption>> corruption;
    bool phantom_seed_set = false;
    std::uint64_t phantom_seed = 0;

    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw PreconditionError("config: line " + std::to_string(lineno)
                                    + " is not 'key = value': '" + trim(raw) + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw PreconditionError("config: line " + std::to_string(lineno)
                                    + " has an empty key or value");

        if (key == "cohort_dir") rc.cohort_dir = val;
        else if (key == "out_dir") rc.out_dir = val;
        else if (key == "modalities") rc.modalities = split_list(val);
        else if (key == "schemes") rc.schemes = split_list(val);
        else if (key == "conv1_filters") rc.base.conv1_filters = parse_count(key, val);
        else if (key == "conv2_filters") rc.base.conv2_filters = parse_count(key, val);
        else if (key == "dense_width") rc.base.dense_width = parse_count(key, val);
        else if (key == "lr") rc.base.lr = parse_real(key, val);
        else if (key == "momentum") rc.base.momentum = parse_real(key, val);
        else if (key == "batch") rc.base.batch = parse_count(key, val);
        else if (key == "epochs") rc.base.epochs = parse_count(key, val);
        else if (key == "stop_accuracy") rc.base.stop_accuracy = parse_real(key, val);
        else if (key == "seed") rc.base.seed = parse_count(key, val);
        else if (key == "folds") rc.folds = parse_count(key, val);
        else if (key == "n_per_class") rc.n_per_class = parse_count(key, val);
        else if (key == "save_models") rc.save_models = parse_flag(key, val);
        else if (key == "save_maps") rc.save_maps = parse_flag(key, val);
        else if (key == "phantom_subjects") rc.phantom.cohort = parse_count(key, val);
        else if (key == "phantom_height") rc.phantom.height = parse_count(key, val);
        else if (key == "phantom_width") rc.phantom.width = parse_count(key, val);
        else if (key == "phantom_axis_min") rc.phantom.axis_min = parse_real(key, val);
        else if (key == "phantom_axis_max") rc.phantom.axis_max = parse_real(key, val);
        else if (key == "phantom_core_fraction") rc.phantom.core_fraction = parse_real(key, val);
        else if (key == "phantom_seed") { phantom_seed = parse_count(key, val); phantom_seed_set = true; }
        else if (key.rfind("contrast_", 0) == 0)
            contrast_overrides.emplace_back(key.substr(9), parse_contrast(key, val));
        else if (key.rfind("corrupt_", 0) == 0)
            corruption.emplace_back(key.substr(8), corruption_from_name(val));
        else
            throw PreconditionError("config: unknown key '" + key + "' on line "
                                    + std::to_string(lineno));
    }

    // assemble the phantom block for the run's modalities
    PhantomConfig ph = rc.phantom;
    ph.seed = phantom_seed_set ? phantom_seed : rc.base.seed;
    ph.contrasts.clear();
    for (const std::string& m : rc.modalities) ph.contrasts.emplace_back(m, default_contrast(m));
    std::sort(ph.contrasts.begin(), ph.contrasts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [name, con] : contrast_overrides) {
        bool found = false;
        for (auto& [cname, c] : ph.contrasts)
            if (cname == name) {
                c = con;
                found = true;
            }
        if (!found)
            throw PreconditionError("config: contrast_" + name
                                    + " names a modality absent from 'modalities'");
    }
    for (const auto& [name, mode] : corruption) {
        bool found = false;
        for (const auto& [cname, c] : ph.contrasts) found = found || cname == name;
        (void)mode;
        if (!found)
            throw PreconditionError("config: corrupt_" + name
                                    + " names a modality absent from 'modalities'");
    }
    ph.corruption = corruption;
    rc.phantom = ph;
    return rc;
}

void validate_run_config(RunConfig& rc) {
    if (rc.modalities.empty())
        throw PreconditionError("config: modalities must list at least one modality");
    std::sort(rc.modalities.begin(), rc.modalities.end());
    for (std::size_t i = 0; i + 1 < rc.modalities.size(); ++i)
        if (rc.modalities[i] == rc.modalities[i + 1])
            throw PreconditionError("config: modalities lists '" + rc.modalities[i] + "' twice");
    if (rc.schemes.empty())
        throw PreconditionError("config: schemes must list at least one scheme");
    for (std::size_t i = 0; i < rc.schemes.size(); ++i) {
        FusionScheme s = scheme_from_name(rc.schemes[i]);
        for (std::size_t j = i + 1; j < rc.schemes.size(); ++j)
            if (rc.schemes[i] == rc.schemes[j])
                throw PreconditionError("config: schemes lists '" + rc.schemes[i] + "' twice");
        if (s != FusionScheme::Single && rc.modalities.size() < 2)
            throw PreconditionError("config: schemes: " + rc.schemes[i]
                                    + " requires at least 2 modalities (modalities has "
                                    + std::to_string(rc.modalities.size()) + ")");
    }
    if (rc.folds < 2)
        throw PreconditionError("config: folds must be at least 2, got "
                                + std::to_string(rc.folds));
    if (rc.n_per_class < 1) throw PreconditionError("config: n_per_class must be at least 1");
    validate_config(rc.base);
}

// ---- metrics tables ----

std::string crossval_detail_csv(const CrossvalResult& result) {
    std::string out = "scheme,modalities,fold,subject,accuracy\n";
    for (const CrossvalRow& row : result.rows) {
        std::string mods = join_modalities(row.modalities);
        for (const SubjectResult& sr : row.subjects)
            out += row.scheme + "," + mods + "," + std::to_string(sr.fold) + ","
                   + result.subject_ids[sr.subject] + "," + fmt_double(sr.accuracy) + "\n";
    }
    return out;
}

std::string crossval_summary_csv(const CrossvalResult& result) {
    std::string out = "scheme,modalities,median,q1,q3,min,max\n";
    for (const CrossvalRow& row : result.rows)
        out += row.scheme + "," + join_modalities(row.modalities) + ","
               + fmt_double(row.stats.median) + "," + fmt_double(row.stats.q1) + ","
               + fmt_double(row.stats.q3) + "," + fmt_double(row.stats.min) + ","
               + fmt_double(row.stats.max) + "\n";
    return out;
}

void write_crossval_csvs(const CrossvalResult& result, const std::string& dir) {
    write_file((fs::path(dir) / "metrics_detail.csv").string(), crossval_detail_csv(result));
    write_file((fs::path(dir) / "metrics_summary.csv").string(), crossval_summary_csv(result));
}

} // namespace fusenet
