#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mll/errors.hpp"
#include "mll/loss.hpp"
#include "mll/matrix.hpp"
#include "mll/metrics.hpp"
#include "mll/toy.hpp"

namespace mll {

// ---------------------------------------------------------------------------
// Embedding container format
//
//   4 magic bytes "MLE1", u32-le N, u32-le d, then N*d float32-le row-major.
//   Labels travel in a sibling text file (<path>.labels, one integer per
//   line). Deliberately trivial to parse from any ecosystem, so external
//   tooling can cross-check metric results.
// ---------------------------------------------------------------------------

inline constexpr char kEmbeddingMagic[4] = {'M', 'L', 'E', '1'};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32_le(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32_le(out, bits);
}

inline float get_f32_le(const unsigned char* p) {
    const std::uint32_t bits = get_u32_le(p);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

} // namespace detail

inline std::string labels_path_for(const std::string& embeddings_path) {
    return embeddings_path + ".labels";
}

inline void write_embeddings(const std::string& path, const Matrix& embeddings,
                             const std::vector<int>& labels) {
    if (!labels.empty() && labels.size() != embeddings.rows())
        throw LengthMismatchError("write_embeddings: labels length != rows");
    std::string blob;
    blob.reserve(12 + embeddings.size() * 4);
    blob.append(kEmbeddingMagic, 4);
    detail::put_u32_le(blob, static_cast<std::uint32_t>(embeddings.rows()));
    detail::put_u32_le(blob, static_cast<std::uint32_t>(embeddings.cols()));
    for (std::size_t k = 0; k < embeddings.size(); ++k)
        detail::put_f32_le(blob, static_cast<float>(embeddings[k]));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_embeddings: cannot open " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("write_embeddings: short write to " + path);

    if (!labels.empty()) {
        std::ofstream lout(labels_path_for(path), std::ios::trunc);
        if (!lout) throw IoError("write_embeddings: cannot open " + labels_path_for(path));
        for (int y : labels) lout << y << '\n';
    }
}

inline Matrix read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_embeddings: cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 12 || std::memcmp(blob.data(), kEmbeddingMagic, 4) != 0)
        throw FormatError("read_embeddings: " + path + " is not an embedding file");
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
    const std::uint32_t n = detail::get_u32_le(p + 4);
    const std::uint32_t d = detail::get_u32_le(p + 8);
    if (blob.size() != 12 + static_cast<std::size_t>(n) * d * 4)
        throw FormatError("read_embeddings: " + path + " truncated (expected " +
                          std::to_string(12 + static_cast<std::size_t>(n) * d * 4) + " bytes, got " +
                          std::to_string(blob.size()) + ")");
    Matrix m(n, d);
    for (std::size_t k = 0; k < m.size(); ++k)
        m[k] = static_cast<double>(detail::get_f32_le(p + 12 + k * 4));
    return m;
}

inline std::vector<int> read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_labels: cannot open " + path);
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(line, &pos);
            while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
            if (pos != line.size()) throw std::invalid_argument("trailing junk");
            labels.push_back(v);
        } catch (const std::exception&) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected one integer");
        }
    }
    return labels;
}

inline EmbeddingBatch read_embedding_batch(const std::string& path) {
    EmbeddingBatch batch;
    batch.features = read_embeddings(path);
    batch.labels = read_labels(labels_path_for(path));
    if (batch.labels.size() != batch.features.rows())
        throw FormatError(labels_path_for(path) + ": label count " +
                          std::to_string(batch.labels.size()) + " != embedding rows " +
                          std::to_string(batch.features.rows()));
    return batch;
}

// ---------------------------------------------------------------------------
// Pairs protocol format
//
//   First non-empty line: fold count k. Each following line: "idx_a idx_b g"
//   with g in {0, 1}. Folds are assigned as k contiguous balanced blocks in
//   file order, the usual layout of published verification pair lists.
// ---------------------------------------------------------------------------

inline PairProtocol read_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_pairs: cannot open " + path);
    PairProtocol proto;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::vector<VerificationPair> pairs;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        if (!have_header) {
            if (!(ss >> proto.num_folds) || proto.num_folds < 1)
                throw FormatError(path + ":" + std::to_string(line_no) +
                                  ": expected the fold count");
            std::string rest;
            if (ss >> rest)
                throw FormatError(path + ":" + std::to_string(line_no) +
                                  ": header must hold one integer");
            have_header = true;
            continue;
        }
        if (line.empty()) continue;
        long long a = -1, b = -1;
        int g = -1;
        std::string rest;
        if (!(ss >> a >> b >> g) || (ss >> rest) || (g != 0 && g != 1) || a < 0 || b < 0)
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": expected 'idx_a idx_b {0|1}'");
        pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), g == 1});
    }
    if (!have_header) throw FormatError(path + ": empty file, expected a fold-count header");
    if (pairs.empty()) throw FormatError(path + ": no pairs after the header");
    proto.pairs = std::move(pairs);
    proto.fold.resize(proto.pairs.size());
    for (std::size_t i = 0; i < proto.pairs.size(); ++i)
        proto.fold[i] = static_cast<int>(i * static_cast<std::size_t>(proto.num_folds) /
                                         proto.pairs.size());
    return proto;
}

inline void write_pairs(const std::string& path, const PairProtocol& proto) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_pairs: cannot open " + path);
    out << proto.num_folds << '\n';
    for (const auto& p : proto.pairs)
        out << p.a << ' ' << p.b << ' ' << (p.genuine ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Training log CSV
// ---------------------------------------------------------------------------

// %.17g keeps doubles round-trippable, which in turn keeps repeated runs
// byte-identical.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_training_log(const std::string& path, const std::vector<TrainingLogRow>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_training_log: cannot open " + path);
    out << "iteration,loss,lr,margin_mean,margin_std\n";
    for (const auto& row : log)
        out << row.iteration << ',' << format_double(row.loss) << ',' << format_double(row.lr)
            << ',' << format_double(row.margin_mean) << ',' << format_double(row.margin_std)
            << '\n';
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace mll
