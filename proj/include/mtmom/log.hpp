#pragma once

#include <atomic>
#include <cstdio>
#include <string>

namespace mtmom::log {

// 0 = errors only, 1 = +warn, 2 = +info, 3 = +debug
inline std::atomic<int>& level() {
    static std::atomic<int> lvl{1};
    return lvl;
}

inline void set_level(int lvl) { level().store(lvl); }

inline void warn(const std::string& msg) {
    if (level().load() >= 1) std::fprintf(stderr, "[warn] %s\n", msg.c_str());
}

inline void info(const std::string& msg) {
    if (level().load() >= 2) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

inline void debug(const std::string& msg) {
    if (level().load() >= 3) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

}  // namespace mtmom::log

namespace mtmom {

// canonical value formatting for files and messages
inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

}  // namespace mtmom
