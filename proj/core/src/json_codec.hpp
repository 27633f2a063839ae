#pragma once

// Internal helpers shared by the model serializers: base64 payloads and the
// {rows, cols, data_b64} matrix encoding (little-endian f64, row-major).

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"

namespace shapegem::codec {

inline std::string base64_encode(const unsigned char* bytes, std::size_t n) {
    static const char alphabet[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (i + 1 < n) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < n) chunk |= static_cast<std::uint32_t>(bytes[i + 2]);
        out.push_back(alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < n ? alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < n ? alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        return -2;
    };
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t chunk = 0;
    int have = 0;
    int pad = 0;
    for (const char c : text) {
        const int v = value_of(c);
        if (v == -2) {
            throw FormatError("invalid base64 character in model file");
        }
        if (v == -1) {
            ++pad;
            chunk <<= 6;
        } else {
            if (pad > 0) {
                throw FormatError("base64 data after padding");
            }
            chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
        }
        if (++have == 4) {
            out.push_back(static_cast<unsigned char>((chunk >> 16) & 0xff));
            if (pad < 2) out.push_back(static_cast<unsigned char>((chunk >> 8) & 0xff));
            if (pad < 1) out.push_back(static_cast<unsigned char>(chunk & 0xff));
            chunk = 0;
            have = 0;
        }
    }
    if (have != 0) {
        throw FormatError("truncated base64 payload");
    }
    return out;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<unsigned char> bytes(sizeof(double) * m.size());
    std::size_t offset = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::memcpy(bytes.data() + offset, &m(r, c), sizeof(double));
            offset += sizeof(double);
        }
    }
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data_b64", base64_encode(bytes.data(), bytes.size())}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) {
        throw FormatError("negative matrix dimensions in model file");
    }
    const std::vector<unsigned char> bytes =
        base64_decode(j.at("data_b64").get<std::string>());
    if (bytes.size() != sizeof(double) * static_cast<std::size_t>(rows * cols)) {
        throw FormatError("matrix payload size mismatch in model file");
    }
    Eigen::MatrixXd m(rows, cols);
    std::size_t offset = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            std::memcpy(&m(r, c), bytes.data() + offset, sizeof(double));
            offset += sizeof(double);
        }
    }
    return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    return matrix_to_json(v);
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const Eigen::MatrixXd m = matrix_from_json(j);
    if (m.cols() != 1) {
        throw FormatError("expected a column vector in model file");
    }
    return m.col(0);
}

} // namespace shapegem::codec
