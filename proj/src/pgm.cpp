#include "haarkit/pgm.hpp"

#include <fstream>
#include <string>

namespace haarkit {
namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

int parse_dim(const std::string& tok, const char* field) {
    if (tok.empty()) throw PgmError(PgmErrorKind::BadHeader, std::string("pgm: missing ") + field);
    for (char ch : tok) {
        if (!std::isdigit(static_cast<unsigned char>(ch))) {
            throw PgmError(PgmErrorKind::BadHeader, std::string("pgm: non-numeric ") + field + " '" + tok + "'");
        }
    }
    long v = 0;
    try {
        v = std::stol(tok);
    } catch (const std::exception&) {
        throw PgmError(PgmErrorKind::BadHeader, std::string("pgm: unparsable ") + field + " '" + tok + "'");
    }
    if (v <= 0 || v > 65535) throw PgmError(PgmErrorKind::BadHeader, std::string("pgm: ") + field + " out of range");
    return static_cast<int>(v);
}

struct Header {
    int width;
    int height;
};

Header read_header(std::istream& in) {
    const std::string magic = next_token(in);
    if (magic != "P5") throw PgmError(PgmErrorKind::BadMagic, "pgm: unsupported format magic '" + magic + "', want P5");
    const int w = parse_dim(next_token(in), "width");
    const int h = parse_dim(next_token(in), "height");
    const std::string maxval_tok = next_token(in);
    long maxval = -1;
    try {
        maxval = std::stol(maxval_tok);
    } catch (const std::exception&) {
        throw PgmError(PgmErrorKind::BadHeader, "pgm: unparsable maxval '" + maxval_tok + "'");
    }
    if (maxval < 1 || maxval > 255) {
        throw PgmError(PgmErrorKind::BadMaxval, "pgm: maxval " + maxval_tok + " unsupported, want <= 255");
    }
    // The single whitespace byte after maxval was already consumed by next_token.
    return {w, h};
}

}  // namespace

GrayImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PgmError(PgmErrorKind::Io, "pgm: cannot open '" + path.string() + "'");
    const Header hd = read_header(in);
    GrayImage img = make_gray(hd.width, hd.height);
    in.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.size())) {
        throw PgmError(PgmErrorKind::Truncated, "pgm: truncated payload in '" + path.string() + "', want " +
                                                    std::to_string(img.size()) + " bytes, got " +
                                                    std::to_string(in.gcount()));
    }
    return img;
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PgmError(PgmErrorKind::Io, "pgm: cannot write '" + path.string() + "'");
    out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
    if (!out) throw PgmError(PgmErrorKind::Io, "pgm: write failed for '" + path.string() + "'");
}

std::pair<int, int> peek_pgm_size(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PgmError(PgmErrorKind::Io, "pgm: cannot open '" + path.string() + "'");
    const Header hd = read_header(in);
    return {hd.width, hd.height};
}

}  // namespace haarkit
