#include "cammotion/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cammotion/error.hpp"

namespace cammotion {

namespace {

constexpr int kMaxDimension = 1 << 15;

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    std::span<const std::uint8_t> rest() const noexcept { return bytes_.subspan(pos_); }

    [[noreturn]] void error(const std::string& message) const { error_at(pos_, message); }

    [[noreturn]] static void error_at(std::size_t offset, const std::string& message) {
        fail(ErrorKind::Parse, "parse error at byte " + std::to_string(offset) + ": " + message);
    }

    std::string magic() {
        if (remaining() < 2) error("missing magic number");
        std::string m{static_cast<char>(bytes_[0]), static_cast<char>(bytes_[1])};
        pos_ = 2;
        return m;
    }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto ch = bytes_[pos_];
            if (ch == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(ch)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string token(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') ++pos_;
        if (pos_ == start) error(std::string("expected ") + what);
        return {reinterpret_cast<const char*>(bytes_.data() + start), pos_ - start};
    }

    int positive_int(const char* what, int max_value) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        const std::string tok = token(what);
        int value = 0;
        const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (ec != std::errc{} || end != tok.data() + tok.size()) {
            error_at(start, std::string("expected ") + what + ", found '" + tok + "'");
        }
        if (value < 1 || value > max_value) {
            error_at(start, std::string(what) + " " + tok + " outside 1.." + std::to_string(max_value));
        }
        return value;
    }

    double real(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        const std::string tok = token(what);
        char* end = nullptr;
        const double value = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size() || !std::isfinite(value)) {
            error_at(start, std::string("expected ") + what + ", found '" + tok + "'");
        }
        return value;
    }

    /// The single whitespace byte separating the header from the payload.
    void header_terminator() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            error("expected a single whitespace byte before the payload");
        }
        ++pos_;
    }

    void require_payload(std::size_t expected) const {
        if (remaining() < expected) {
            error("truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                  std::to_string(remaining()));
        }
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void append(std::vector<std::uint8_t>& out, const std::string& s) {
    out.insert(out.end(), s.begin(), s.end());
}

std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

std::string format_real(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::vector<double> parse_numbers(const std::string& line, std::size_t line_no) {
    std::vector<double> values;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) {
            fail(ErrorKind::Parse, "pose file line " + std::to_string(line_no) + ": bad number '" + tok + "'");
        }
        values.push_back(v);
    }
    return values;
}

} // namespace

Image<std::uint8_t> decode_pnm(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const std::string magic = r.magic();
    int channels = 0;
    if (magic == "P6") {
        channels = 3;
    } else if (magic == "P5") {
        channels = 1;
    } else {
        ByteReader::error_at(0, "unsupported magic '" + magic + "', expected P5 or P6");
    }
    const int width = r.positive_int("width", kMaxDimension);
    const int height = r.positive_int("height", kMaxDimension);
    const std::size_t maxval_offset = r.offset();
    const int maxval = r.positive_int("maxval", 65535);
    if (maxval > 255) ByteReader::error_at(maxval_offset, "16-bit samples are not supported");
    r.header_terminator();

    const std::size_t expected = static_cast<std::size_t>(width) * height * channels;
    r.require_payload(expected);
    Image<std::uint8_t> image(width, height, channels);
    std::copy_n(r.rest().begin(), expected, image.data().begin());
    if (maxval != 255) {
        for (auto& v : image.data()) {
            if (v > maxval) ByteReader::error_at(r.offset(), "sample exceeds maxval");
            v = static_cast<std::uint8_t>(std::lround(v * 255.0 / maxval));
        }
    }
    return image;
}

std::vector<std::uint8_t> encode_pnm(const Image<std::uint8_t>& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        fail(ErrorKind::InvalidArgument, "PNM images need 1 or 3 channels");
    }
    std::vector<std::uint8_t> out;
    append(out, std::string(image.channels() == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width()) +
                    " " + std::to_string(image.height()) + "\n255\n");
    out.insert(out.end(), image.data().begin(), image.data().end());
    return out;
}

Image<float> decode_pfm(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const std::string magic = r.magic();
    int channels = 0;
    if (magic == "PF") {
        channels = 3;
    } else if (magic == "Pf") {
        channels = 1;
    } else {
        ByteReader::error_at(0, "unsupported magic '" + magic + "', expected PF or Pf");
    }
    const int width = r.positive_int("width", kMaxDimension);
    const int height = r.positive_int("height", kMaxDimension);
    const std::size_t scale_offset = r.offset();
    const double scale = r.real("scale");
    if (scale == 0.0) ByteReader::error_at(scale_offset, "scale must be non-zero");
    r.header_terminator();

    const bool little = scale < 0.0;
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    r.require_payload(count * 4);
    const auto payload = r.rest();
    Image<float> image(width, height, channels);
    const std::size_t row_len = static_cast<std::size_t>(width) * channels;
    for (int row = 0; row < height; ++row) {
        const int y = height - 1 - row;
        for (std::size_t k = 0; k < row_len; ++k) {
            std::uint32_t bits = 0;
            std::memcpy(&bits, payload.data() + (static_cast<std::size_t>(row) * row_len + k) * 4, 4);
            const bool host_little = std::endian::native == std::endian::little;
            if (little != host_little) bits = byteswap32(bits);
            image.data()[static_cast<std::size_t>(y) * row_len + k] = std::bit_cast<float>(bits);
        }
    }
    return image;
}

std::vector<std::uint8_t> encode_pfm(const Image<float>& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        fail(ErrorKind::InvalidArgument, "PFM images need 1 or 3 channels");
    }
    std::vector<std::uint8_t> out;
    append(out, std::string(image.channels() == 3 ? "PF" : "Pf") + "\n" + std::to_string(image.width()) +
                    " " + std::to_string(image.height()) + "\n-1.0\n");
    const std::size_t row_len = static_cast<std::size_t>(image.width()) * image.channels();
    out.reserve(out.size() + row_len * image.height() * 4);
    for (int y = image.height() - 1; y >= 0; --y) {
        for (std::size_t k = 0; k < row_len; ++k) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(image.data()[static_cast<std::size_t>(y) * row_len + k]);
            if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
        }
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "short write to '" + path.string() + "'");
}

Image<std::uint8_t> quantize(const ColorImage& color) {
    Image<std::uint8_t> out(color.width(), color.height(), color.channels());
    for (std::size_t k = 0; k < color.data().size(); ++k) {
        const double v = std::clamp(color.data()[k], 0.0, 1.0);
        out.data()[k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

ColorImage dequantize(const Image<std::uint8_t>& image) {
    ColorImage out(image.width(), image.height(), image.channels());
    for (std::size_t k = 0; k < image.data().size(); ++k) out.data()[k] = image.data()[k] / 255.0;
    return out;
}

Image<float> to_float(const Image<double>& image) {
    Image<float> out(image.width(), image.height(), image.channels());
    std::transform(image.data().begin(), image.data().end(), out.data().begin(),
                   [](double v) { return static_cast<float>(v); });
    return out;
}

Image<double> to_double(const Image<float>& image) {
    Image<double> out(image.width(), image.height(), image.channels());
    std::copy(image.data().begin(), image.data().end(), out.data().begin());
    return out;
}

ColorImage read_ppm(const std::filesystem::path& path) {
    const auto image = decode_pnm(read_file(path));
    if (image.channels() != 3) fail(ErrorKind::Parse, "'" + path.string() + "' is not a color (P6) image");
    return dequantize(image);
}

void write_ppm(const std::filesystem::path& path, const ColorImage& color) {
    if (color.channels() != 3) fail(ErrorKind::InvalidArgument, "PPM output needs 3 channels");
    write_file(path, encode_pnm(quantize(color)));
}

Mask read_mask_pgm(const std::filesystem::path& path) {
    auto image = decode_pnm(read_file(path));
    if (image.channels() != 1) fail(ErrorKind::Parse, "'" + path.string() + "' is not a grayscale (P5) image");
    for (auto& v : image.data()) v = v != 0;
    return image;
}

void write_mask_pgm(const std::filesystem::path& path, const Mask& mask) {
    Image<std::uint8_t> image(mask.width(), mask.height(), 1);
    for (std::size_t k = 0; k < mask.data().size(); ++k) image.data()[k] = mask.data()[k] ? 255 : 0;
    write_file(path, encode_pnm(image));
}

DepthImage read_depth_pfm(const std::filesystem::path& path) {
    const auto image = decode_pfm(read_file(path));
    if (image.channels() != 1) fail(ErrorKind::Parse, "'" + path.string() + "' is not a single-channel (Pf) map");
    return to_double(image);
}

void write_depth_pfm(const std::filesystem::path& path, const DepthImage& depth) {
    if (depth.channels() != 1) fail(ErrorKind::InvalidArgument, "depth output needs 1 channel");
    write_file(path, encode_pfm(to_float(depth)));
}

std::string format_pose_file(const Trajectory& trajectory) {
    std::string out = "# world-to-camera extrinsics, row-major 3x4 [R | t], one frame per line\n";
    for (const auto& pose : trajectory.poses) {
        const auto values = to_row_major_3x4(pose);
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (k) out += ' ';
            out += format_real(values[k]);
        }
        out += '\n';
    }
    return out;
}

Trajectory parse_pose_file(const std::string& text) {
    std::vector<std::vector<double>> matrices;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto values = parse_numbers(line, line_no);
        if (values.empty()) continue;
        if (values.size() != 12) {
            fail(ErrorKind::Parse, "pose file line " + std::to_string(line_no) + ": expected 12 numbers, got " +
                                       std::to_string(values.size()));
        }
        matrices.push_back(std::move(values));
    }
    return from_extrinsics(matrices);
}

Trajectory read_pose_file(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_pose_file(std::string(bytes.begin(), bytes.end()));
}

void write_pose_file(const std::filesystem::path& path, const Trajectory& trajectory) {
    const std::string text = format_pose_file(trajectory);
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

bool TrajectorySpec::uses_rotate() const {
    return std::any_of(motions.begin(), motions.end(),
                       [](const MotionPrimitive& m) { return m.kind == MotionKind::Rotate; });
}

TrajectorySpec parse_trajectory_spec(const nlohmann::json& doc) {
    if (!doc.is_object()) fail(ErrorKind::Parse, "trajectory spec must be a JSON object");
    const bool has_motions = doc.contains("motions");
    const bool has_extrinsics = doc.contains("extrinsics");
    if (has_motions == has_extrinsics) {
        fail(ErrorKind::Parse, "trajectory spec needs exactly one of \"motions\" or \"extrinsics\"");
    }
    TrajectorySpec spec;
    try {
        if (doc.contains("focus_distance")) spec.focus_distance = doc.at("focus_distance").get<double>();
        if (has_motions) {
            const auto& motions = doc.at("motions");
            if (!motions.is_array() || motions.empty()) fail(ErrorKind::Parse, "\"motions\" must be a non-empty array");
            for (std::size_t k = 0; k < motions.size(); ++k) {
                const auto& m = motions[k];
                MotionPrimitive p;
                p.kind = parse_motion_kind(m.at("kind").get<std::string>());
                p.direction = parse_motion_direction(m.at("direction").get<std::string>());
                p.magnitude = m.at("magnitude").get<double>();
                p.frames = m.at("frames").get<int>();
                spec.motions.push_back(p);
            }
            spec.mode = parse_combine_mode(doc.value("mode", std::string("sequential")));
        } else {
            const auto& ext = doc.at("extrinsics");
            if (!ext.is_array() || ext.empty()) fail(ErrorKind::Parse, "\"extrinsics\" must be a non-empty array");
            for (const auto& row : ext) spec.extrinsics.push_back(row.get<std::vector<double>>());
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("trajectory spec: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) throw;
        fail(ErrorKind::Parse, std::string("trajectory spec: ") + e.what());
    }
    return spec;
}

TrajectorySpec read_trajectory_spec(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, "'" + path.string() + "': parse error at byte " + std::to_string(e.byte) + ": " +
                                   e.what());
    }
    return parse_trajectory_spec(doc);
}

nlohmann::json to_json(const TrajectorySpec& spec) {
    nlohmann::json doc = nlohmann::json::object();
    if (!spec.extrinsics.empty()) {
        doc["extrinsics"] = spec.extrinsics;
    } else {
        nlohmann::json motions = nlohmann::json::array();
        for (const auto& m : spec.motions) {
            motions.push_back({{"kind", to_string(m.kind)},
                               {"direction", to_string(m.direction)},
                               {"magnitude", m.magnitude},
                               {"frames", m.frames}});
        }
        doc["motions"] = std::move(motions);
        doc["mode"] = spec.mode == CombineMode::Simultaneous ? "simultaneous" : "sequential";
    }
    if (spec.focus_distance) doc["focus_distance"] = *spec.focus_distance;
    return doc;
}

Trajectory build_trajectory(const TrajectorySpec& spec, std::optional<double> fallback_focus) {
    if (!spec.extrinsics.empty()) return from_extrinsics(spec.extrinsics);
    if (spec.motions.empty()) fail(ErrorKind::InvalidArgument, "trajectory spec has no motions");
    const auto focus = spec.focus_distance ? spec.focus_distance : fallback_focus;
    std::vector<Trajectory> parts;
    parts.reserve(spec.motions.size());
    for (const auto& m : spec.motions) parts.push_back(build_primitive(m, focus));
    if (parts.size() == 1) return parts.front();
    return combine(parts, spec.mode);
}

std::filesystem::path write_latents(const std::filesystem::path& root, const LatentSequence& latents,
                                    const nlohmann::json& metadata) {
    const auto dir = root / "latents" / ("t" + std::to_string(latents.timestep));
    std::filesystem::create_directories(dir);
    for (int n = 0; n < latents.frames; ++n) {
        for (int c = 0; c < latents.channels; ++c) {
            Image<float> plane(latents.width, latents.height, 1);
            for (int y = 0; y < latents.height; ++y) {
                for (int x = 0; x < latents.width; ++x) plane.at(x, y) = static_cast<float>(latents.at(n, c, y, x));
            }
            write_file(dir / ("frame_" + std::to_string(n) + "_c" + std::to_string(c) + ".pfm"), encode_pfm(plane));
        }
    }
    nlohmann::json meta = metadata;
    meta["timestep"] = latents.timestep;
    meta["shape"] = {latents.frames, latents.channels, latents.height, latents.width};
    const std::string text = meta.dump(2) + "\n";
    write_file(dir / "metadata.json", {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    return dir;
}

LatentSequence read_latents(const std::filesystem::path& directory) {
    const auto bytes = read_file(directory / "metadata.json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, std::string("latent metadata: ") + e.what());
    }
    const auto shape = meta.at("shape").get<std::vector<int>>();
    if (shape.size() != 4) fail(ErrorKind::Parse, "latent metadata shape must have 4 entries");
    LatentSequence latents(shape[0], shape[1], shape[2], shape[3], meta.at("timestep").get<int>());
    for (int n = 0; n < latents.frames; ++n) {
        for (int c = 0; c < latents.channels; ++c) {
            const auto plane = decode_pfm(
                read_file(directory / ("frame_" + std::to_string(n) + "_c" + std::to_string(c) + ".pfm")));
            if (plane.channels() != 1 || !plane.same_shape(latents.width, latents.height)) {
                fail(ErrorKind::Parse, "latent plane has the wrong shape");
            }
            for (int y = 0; y < latents.height; ++y) {
                for (int x = 0; x < latents.width; ++x) latents.at(n, c, y, x) = plane.at(x, y);
            }
        }
    }
    return latents;
}

} // namespace cammotion
