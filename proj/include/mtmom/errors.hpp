#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mtmom {

// Every failure the library raises carries one of these codes so callers
// (notably the CLI) can map it to an exit category without string matching.
enum class Errc {
    // configuration / request shape
    invalid_spec,
    invalid_span,
    invalid_kind,
    config_error,

    // data quality
    missing_column,
    unparseable_date,
    price_invariant,
    duplicate_asset_id,
    unsorted_dates,
    empty_input,
    window_too_large,
    insufficient_history,
    misaligned_panels,
    no_valid_data,
    no_overlap,

    // numerics / training
    shape_mismatch,
    non_scalar_loss,
    too_few_observations,
    zero_volatility,
    training_diverged,
    total_loss,

    // environment
    io_error,
};

class Error : public std::runtime_error {
  public:
    Error(Errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
    Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

// CLI exit categories: 2 config, 3 data, 4 training, 5 io.
inline int exit_category(Errc c) {
    switch (c) {
        case Errc::invalid_spec:
        case Errc::invalid_span:
        case Errc::invalid_kind:
        case Errc::config_error:
            return 2;
        case Errc::missing_column:
        case Errc::unparseable_date:
        case Errc::price_invariant:
        case Errc::duplicate_asset_id:
        case Errc::unsorted_dates:
        case Errc::empty_input:
        case Errc::window_too_large:
        case Errc::insufficient_history:
        case Errc::misaligned_panels:
        case Errc::no_valid_data:
        case Errc::no_overlap:
            return 3;
        case Errc::shape_mismatch:
        case Errc::non_scalar_loss:
        case Errc::too_few_observations:
        case Errc::zero_volatility:
        case Errc::training_diverged:
        case Errc::total_loss:
            return 4;
        case Errc::io_error:
            return 5;
    }
    return 1;
}

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::invalid_spec: return "invalid_spec";
        case Errc::invalid_span: return "invalid_span";
        case Errc::invalid_kind: return "invalid_kind";
        case Errc::config_error: return "config_error";
        case Errc::missing_column: return "missing_column";
        case Errc::unparseable_date: return "unparseable_date";
        case Errc::price_invariant: return "price_invariant";
        case Errc::duplicate_asset_id: return "duplicate_asset_id";
        case Errc::unsorted_dates: return "unsorted_dates";
        case Errc::empty_input: return "empty_input";
        case Errc::window_too_large: return "window_too_large";
        case Errc::insufficient_history: return "insufficient_history";
        case Errc::misaligned_panels: return "misaligned_panels";
        case Errc::no_valid_data: return "no_valid_data";
        case Errc::no_overlap: return "no_overlap";
        case Errc::shape_mismatch: return "shape_mismatch";
        case Errc::non_scalar_loss: return "non_scalar_loss";
        case Errc::too_few_observations: return "too_few_observations";
        case Errc::zero_volatility: return "zero_volatility";
        case Errc::training_diverged: return "training_diverged";
        case Errc::total_loss: return "total_loss";
        case Errc::io_error: return "io_error";
    }
    return "unknown";
}

}  // namespace mtmom
