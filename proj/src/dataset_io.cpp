#include <charconv>
#include <sstream>
#include <vector>

#include "kronest/error.hpp"
#include "kronest/io.hpp"

namespace kronest {

namespace {

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) {
            f.remove_prefix(1);
        }
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) {
            f.remove_suffix(1);
        }
    }
    return out;
}

double parse_number(std::string_view field, std::size_t line_no)
{
    double v = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    if (!field.empty() && *begin == '+') {
        ++begin;
    }
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || field.empty()) {
        throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "' as a number");
    }
    return v;
}

std::vector<std::string> expected_header(ModelFamily family, const KroneckerShape& shape)
{
    std::vector<std::string> names;
    const bool bilinear = family == ModelFamily::bilinear;
    const Index m = bilinear ? shape.q1 * shape.q2 : shape.rows() * shape.cols();
    for (Index j = 1; j <= m; ++j) {
        names.push_back("x_" + std::to_string(j));
    }
    if (bilinear) {
        for (Index j = 1; j <= shape.p1 * shape.p2; ++j) {
            names.push_back("y_" + std::to_string(j));
        }
    } else {
        names.emplace_back("y");
    }
    return names;
}

} // namespace

std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw Error("format_double: conversion failed");
    }
    return std::string(buf, ptr);
}

Dataset parse_dataset_csv(std::string_view text, ModelFamily family, const KroneckerShape& shape)
{
    shape.validate();
    const std::vector<std::string> header = expected_header(family, shape);
    std::vector<Sample> samples;
    std::size_t line_no = 0;
    bool saw_header = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        const auto fields = split_fields(line);
        if (!saw_header) {
            if (fields.size() != header.size()) {
                throw DataError("header has " + std::to_string(fields.size()) + " columns, expected " +
                                std::to_string(header.size()) + " for the declared shape");
            }
            for (std::size_t j = 0; j < fields.size(); ++j) {
                if (fields[j] != header[j]) {
                    throw DataError("header column " + std::to_string(j + 1) + " is '" + std::string(fields[j]) +
                                    "', expected '" + header[j] + "'");
                }
            }
            saw_header = true;
            continue;
        }
        if (fields.size() != header.size()) {
            throw DataError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(header.size()));
        }
        Sample s;
        std::size_t f = 0;
        if (family == ModelFamily::bilinear) {
            s.x.resize(shape.q1, shape.q2);
            for (Index j = 0; j < s.x.size(); ++j) {
                s.x.data()[j] = parse_number(fields[f++], line_no);
            }
            s.response.resize(shape.p1, shape.p2);
            for (Index j = 0; j < s.response.size(); ++j) {
                s.response.data()[j] = parse_number(fields[f++], line_no);
            }
        } else {
            s.x.resize(shape.rows(), shape.cols());
            for (Index j = 0; j < s.x.size(); ++j) {
                s.x.data()[j] = parse_number(fields[f++], line_no);
            }
            s.y = parse_number(fields[f], line_no);
        }
        samples.push_back(std::move(s));
    }
    if (!saw_header) {
        throw DataError("dataset CSV is empty");
    }
    if (samples.empty()) {
        throw DataError("dataset CSV has no rows");
    }
    return Dataset::from_samples(family, shape, samples);
}

Dataset read_dataset_csv(const std::filesystem::path& path, ModelFamily family, const KroneckerShape& shape)
{
    return parse_dataset_csv(read_file(path), family, shape);
}

std::string dataset_to_csv(const Dataset& data)
{
    std::ostringstream os;
    const auto header = expected_header(data.family, data.shape);
    for (std::size_t j = 0; j < header.size(); ++j) {
        os << (j ? "," : "") << header[j];
    }
    os << '\n';
    for (Index i = 0; i < data.size(); ++i) {
        const Sample s = data.sample(i);
        bool first = true;
        auto put = [&](double v) {
            os << (first ? "" : ",") << format_double(v);
            first = false;
        };
        for (Index j = 0; j < s.x.size(); ++j) {
            put(s.x.data()[j]);
        }
        if (data.family == ModelFamily::bilinear) {
            for (Index j = 0; j < s.response.size(); ++j) {
                put(s.response.data()[j]);
            }
        } else {
            put(s.y);
        }
        os << '\n';
    }
    return os.str();
}

std::string matrix_to_csv(const Matrix& m)
{
    std::ostringstream os;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            os << (j ? "," : "") << format_double(m(i, j));
        }
        os << '\n';
    }
    return os.str();
}

} // namespace kronest
