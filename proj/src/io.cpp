#include "defence/io.hpp"

#include "defence/error.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>

namespace defence::imaging {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("unreadable file: cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string lower_ext(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext;
}

struct PngReadSource {
    const std::vector<unsigned char>* bytes;
    std::size_t offset;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t len)
{
    auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
    if (src->offset + len > src->bytes->size())
        png_error(png, "truncated");
    std::memcpy(out, src->bytes->data() + src->offset, len);
    src->offset += len;
}

void png_error_cb(png_structp png, png_const_charp)
{
    longjmp(png_jmpbuf(png), 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

Image decode_png(const std::vector<unsigned char>& bytes, const std::filesystem::path& path)
{
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
    if (!png)
        throw IoError("unreadable file: libpng init failed");
    png_infop info = png_create_info_struct(png);
    PngReadSource src{&bytes, 0};
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    png_uint_32 w = 0;
    png_uint_32 h = 0;
    int channels = 0;
    int depth = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unreadable file: corrupt or truncated PNG " + path.string());
    }
    png_set_read_fn(png, &src, png_read_cb);
    png_read_info(png, info);
    w = png_get_image_width(png, info);
    h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    if (depth == 16 && std::endian::native == std::endian::little)
        png_set_swap(png);
    png_read_update_info(png, info);
    channels = png_get_channels(png, info);
    depth = png_get_bit_depth(png, info);

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 r = 0; r < h; ++r)
        rows[r] = buffer.data() + r * rowbytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    if (w == 0 || h == 0)
        throw IoError("zero-dimension image: " + path.string());
    if (channels != 1 && channels != 3)
        throw IoError("unsupported format: PNG with " + std::to_string(channels) + " channels");

    Image img(static_cast<int>(h), static_cast<int>(w), channels);
    auto dst = img.values();
    if (depth == 16) {
        for (std::size_t i = 0; i < dst.size(); ++i) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * i, 2);
            dst[i] = v / 65535.0;
        }
    } else {
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = buffer[i] / 255.0;
    }
    return img;
}

// Reads the next whitespace-separated header token, skipping '#' comments.
bool pnm_token(const std::vector<unsigned char>& bytes, std::size_t& pos, std::string& tok)
{
    tok.clear();
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n')
                ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    while (pos < bytes.size() && !std::isspace(bytes[pos]))
        tok.push_back(static_cast<char>(bytes[pos++]));
    return !tok.empty();
}

Image decode_pnm(const std::vector<unsigned char>& bytes, const std::filesystem::path& path)
{
    std::size_t pos = 0;
    std::string magic, ws, hs, ms;
    if (!pnm_token(bytes, pos, magic) || !pnm_token(bytes, pos, ws) || !pnm_token(bytes, pos, hs) ||
        !pnm_token(bytes, pos, ms))
        throw IoError("unreadable file: truncated PNM header in " + path.string());
    const int channels = magic == "P6" ? 3 : 1;
    long w = 0;
    long h = 0;
    long maxval = 0;
    try {
        w = std::stol(ws);
        h = std::stol(hs);
        maxval = std::stol(ms);
    } catch (const std::exception&) {
        throw IoError("unreadable file: malformed PNM header in " + path.string());
    }
    if (w <= 0 || h <= 0)
        throw IoError("zero-dimension image: " + path.string());
    if (maxval <= 0 || maxval > 65535)
        throw IoError("unsupported format: PNM maxval " + ms);
    ++pos; // single whitespace after maxval
    const std::size_t bps = maxval < 256 ? 1 : 2;
    const std::size_t need = static_cast<std::size_t>(w) * h * channels * bps;
    if (pos + need > bytes.size())
        throw IoError("unreadable file: truncated PNM data in " + path.string());

    Image img(static_cast<int>(h), static_cast<int>(w), channels);
    auto dst = img.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        unsigned v = bps == 1 ? bytes[pos + i] : (unsigned{bytes[pos + 2 * i]} << 8) | bytes[pos + 2 * i + 1];
        dst[i] = std::min(1.0, static_cast<double>(v) / static_cast<double>(maxval));
    }
    return img;
}

void encode_png(const std::filesystem::path& path, const Image& img, int bit_depth)
{
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp)
        throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
    png_infop info = png_create_info_struct(png);
    const int h = img.height();
    const int w = img.width();
    const int nc = img.channels();
    const std::size_t bps = bit_depth == 16 ? 2 : 1;
    std::vector<unsigned char> buffer(static_cast<std::size_t>(h) * w * nc * bps);
    auto src = img.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = std::isfinite(src[i]) ? std::clamp(src[i], 0.0, 1.0) : 0.0;
        if (bps == 1) {
            buffer[i] = static_cast<unsigned char>(std::lround(v * 255.0));
        } else {
            const auto q = static_cast<unsigned>(std::lround(v * 65535.0));
            buffer[2 * i] = static_cast<unsigned char>(q >> 8);
            buffer[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int r = 0; r < h; ++r)
        rows[static_cast<std::size_t>(r)] = buffer.data() + static_cast<std::size_t>(r) * w * nc * bps;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 nc == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void encode_pnm(const std::filesystem::path& path, const Image& img, int bit_depth)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    const int maxval = bit_depth == 16 ? 65535 : 255;
    out << (img.channels() == 3 ? "P6" : "P5") << '\n' << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
    for (double v : img.values()) {
        const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        const auto q = static_cast<unsigned>(std::lround(c * maxval));
        if (maxval == 255) {
            out.put(static_cast<char>(q));
        } else {
            out.put(static_cast<char>(q >> 8));
            out.put(static_cast<char>(q & 0xff));
        }
    }
    if (!out)
        throw IoError("write failed for " + path.string());
}

} // namespace

Image load_image(const std::filesystem::path& path)
{
    const auto bytes = read_all(path);
    static constexpr std::array<unsigned char, 8> png_sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(png_sig.begin(), png_sig.end(), bytes.begin()))
        return decode_png(bytes, path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
        return decode_pnm(bytes, path);
    if (bytes.empty())
        throw IoError("unreadable file: empty " + path.string());
    throw IoError("unsupported format: " + path.string());
}

void save_image(const std::filesystem::path& path, const Image& img, int bit_depth)
{
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument("save_image: bit depth must be 8 or 16");
    if (img.channels() != 1 && img.channels() != 3)
        throw std::invalid_argument("save_image: expected 1 or 3 channels");
    if (img.empty())
        throw std::invalid_argument("save_image: empty image");
    const std::string ext = lower_ext(path);
    if (ext == ".png") {
        encode_png(path, img, bit_depth);
    } else if (ext == ".pgm" || ext == ".ppm") {
        if ((ext == ".pgm") != (img.channels() == 1))
            throw std::invalid_argument("save_image: channel count does not match " + ext);
        encode_pnm(path, img, bit_depth);
    } else {
        throw IoError("unsupported format: " + path.string());
    }
}

BinaryMask load_mask(const std::filesystem::path& path)
{
    const Image img = to_luma(load_image(path));
    BinaryMask mask(img.height(), img.width());
    auto v = img.values();
    for (std::size_t i = 0; i < v.size(); ++i)
        mask.set(i, v[i] >= 0.5);
    return mask;
}

void save_mask(const std::filesystem::path& path, const BinaryMask& mask)
{
    save_image(path, mask_to_image(mask), 8);
}

void write_pfm(const std::filesystem::path& path, int height, int width, int channels,
               std::span<const double> values)
{
    if (channels < 1 || channels > 3 ||
        values.size() != static_cast<std::size_t>(height) * width * channels)
        throw std::invalid_argument("write_pfm: inconsistent dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    const int file_channels = channels == 1 ? 1 : 3;
    out << (file_channels == 1 ? "Pf" : "PF") << '\n' << width << ' ' << height << '\n' << "-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(width) * file_channels);
    // PFM stores rows bottom to top.
    for (int r = height - 1; r >= 0; --r) {
        for (int c = 0; c < width; ++c)
            for (int ch = 0; ch < file_channels; ++ch) {
                const double v = ch < channels
                                     ? values[(static_cast<std::size_t>(r) * width + c) * channels + ch]
                                     : 0.0;
                row[static_cast<std::size_t>(c) * file_channels + ch] = static_cast<float>(v);
            }
        if constexpr (std::endian::native == std::endian::big) {
            for (float& f : row)
                f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out)
        throw IoError("write failed for " + path.string());
}

PfmData read_pfm(const std::filesystem::path& path)
{
    const auto bytes = read_all(path);
    std::size_t pos = 0;
    std::string magic, ws, hs, ss;
    if (!pnm_token(bytes, pos, magic) || !pnm_token(bytes, pos, ws) || !pnm_token(bytes, pos, hs) ||
        !pnm_token(bytes, pos, ss))
        throw IoError("unreadable file: truncated PFM header in " + path.string());
    if (magic != "Pf" && magic != "PF")
        throw IoError("unsupported format: not a PFM file " + path.string());
    ++pos;
    PfmData d;
    d.channels = magic == "PF" ? 3 : 1;
    d.width = std::stoi(ws);
    d.height = std::stoi(hs);
    const bool little = std::stod(ss) < 0;
    const std::size_t n = static_cast<std::size_t>(d.width) * d.height * d.channels;
    if (pos + n * 4 > bytes.size())
        throw IoError("unreadable file: truncated PFM data in " + path.string());
    d.values.resize(n);
    const std::size_t row_len = static_cast<std::size_t>(d.width) * d.channels;
    for (int r = 0; r < d.height; ++r)
        for (std::size_t k = 0; k < row_len; ++k) {
            std::uint32_t u;
            std::memcpy(&u, bytes.data() + pos + (static_cast<std::size_t>(d.height - 1 - r) * row_len + k) * 4, 4);
            if (little != (std::endian::native == std::endian::little))
                u = __builtin_bswap32(u);
            d.values[static_cast<std::size_t>(r) * row_len + k] = std::bit_cast<float>(u);
        }
    return d;
}

Image false_color(std::span<const double> values, std::span<const std::uint8_t> valid, int height, int width,
                  double lo, double hi)
{
    Image out(height, width, 3);
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        if (!valid.empty() && !valid[i])
            continue;
        const double t = std::clamp((values[i] - lo) / span, 0.0, 1.0);
        // piecewise-linear "jet"
        auto ramp = [](double x) { return std::clamp(1.5 - std::abs(4.0 * x), 0.0, 1.0); };
        const auto rr = static_cast<int>(i / static_cast<std::size_t>(width));
        const auto cc = static_cast<int>(i % static_cast<std::size_t>(width));
        out.at(rr, cc, 0) = ramp(t - 0.75);
        out.at(rr, cc, 1) = ramp(t - 0.5);
        out.at(rr, cc, 2) = ramp(t - 0.25);
    }
    return out;
}

} // namespace defence::imaging
