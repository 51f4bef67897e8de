#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mtmom/errors.hpp"
#include "mtmom/nn/tensor.hpp"

namespace mtmom::nn {

// Text checkpoint with hex-float values, so save/load round trips are exact
// and resumed runs are bit-identical. Layout:
//
//   mtmom-checkpoint v1
//   meta <n>
//   <key> <value>          (n lines)
//   tensors <n>
//   <name> <rows> <cols>
//   <hex doubles, one line, space separated>
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io_error, "cannot write checkpoint '" + path + "'");
    out << "mtmom-checkpoint v1\n";
    out << "meta " << ck.meta.size() << '\n';
    for (const auto& [k, v] : ck.meta) out << k << ' ' << v << '\n';
    out << "tensors " << ck.tensors.size() << '\n';
    char buf[48];
    for (const auto& [name, t] : ck.tensors) {
        out << name << ' ' << t.rows << ' ' << t.cols << '\n';
        for (size_t i = 0; i < t.numel(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", t.v[i]);
            if (i) out << ' ';
            out << buf;
        }
        out << '\n';
    }
    if (!out) raise(Errc::io_error, "write failed for checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_error, "cannot open checkpoint '" + path + "'");
    auto bad = [&](const std::string& why) -> void {
        raise(Errc::io_error, "checkpoint '" + path + "': " + why);
    };
    std::string line;
    if (!std::getline(in, line) || line != "mtmom-checkpoint v1") bad("bad header");

    Checkpoint ck;
    std::string word;
    size_t n = 0;
    in >> word >> n;
    if (word != "meta") bad("expected meta count");
    for (size_t i = 0; i < n; ++i) {
        std::string k, v;
        in >> k >> v;
        ck.meta[k] = v;
    }
    in >> word >> n;
    if (word != "tensors") bad("expected tensor count");
    for (size_t i = 0; i < n; ++i) {
        std::string name;
        int rows = 0, cols = 0;
        in >> name >> rows >> cols;
        if (!in || rows < 1 || cols < 1) bad("bad tensor header");
        Tensor t(rows, cols);
        for (size_t j = 0; j < t.numel(); ++j) {
            in >> word;
            if (!in) bad("truncated tensor '" + name + "'");
            char* end = nullptr;
            t.v[j] = std::strtod(word.c_str(), &end);
            if (end == word.c_str()) bad("unparseable value in '" + name + "'");
        }
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace mtmom::nn
