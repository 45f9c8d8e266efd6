#include "mdlab/report.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace mdlab {

std::string format_double(double x) {
    return fmt::format("{:.17g}", x);
}

std::string format_int(long long x) {
    return fmt::format("{}", x);
}

namespace {

void dump_into(std::string& out, const nlohmann::json& j, int indent, int depth) {
    using value_t = nlohmann::json::value_t;
    const auto newline = [&](int d) {
        if (indent >= 0) {
            out += '\n';
            out.append(static_cast<std::size_t>(indent * d), ' ');
        }
    };
    switch (j.type()) {
        case value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                newline(depth + 1);
                out += nlohmann::json(it.key()).dump();
                out += indent >= 0 ? ": " : ":";
                dump_into(out, it.value(), indent, depth + 1);
            }
            newline(depth);
            out += '}';
            return;
        }
        case value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += '[';
            bool first = true;
            for (const auto& v : j) {
                if (!first) out += ',';
                first = false;
                newline(depth + 1);
                dump_into(out, v, indent, depth + 1);
            }
            newline(depth);
            out += ']';
            return;
        }
        case value_t::number_float: {
            const double x = j.get<double>();
            out += std::isfinite(x) ? format_double(x) : "null";
            return;
        }
        default:
            out += j.dump();
    }
}

}  // namespace

std::string dump_json(const nlohmann::json& j, int indent) {
    std::string out;
    dump_into(out, j, indent, 0);
    return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    }
    out << dump_json(j) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(fmt::format("cannot read {}", path.string()));
    }
    return nlohmann::json::parse(in);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
    if (!out_) {
        throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    }
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) {
        throw std::invalid_argument(fmt::format("csv row has {} cells, header has {}", cells.size(), columns_));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        out_ << cells[i];
    }
    out_ << '\n';
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j{{"command", command}, {"config", config}, {"seed", seed}, {"outputs", outputs},
                     {"version", version}};
    if (wall_clock_seconds) {
        j["wall_clock_seconds"] = *wall_clock_seconds;
    }
    return j;
}

}  // namespace mdlab
