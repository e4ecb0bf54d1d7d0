#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "redi/core.hpp"
#include "redi/flow.hpp"

namespace redi {

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);
double parse_double(std::string_view text);

// Line-oriented UTF-8 formats. Line 1 is a magic tag, line 2 the state space
// ("n=<N> d=<D> mask=<token|none>"), then one row per entry with fields
// separated by " | ". Writers emit canonical order; readers accept any order.
inline constexpr std::string_view kCouplingMagic = "#redi coupling v1";
inline constexpr std::string_view kDistMagic = "#redi dist v1";
inline constexpr std::string_view kKernelMagic = "#redi kernel v1";
inline constexpr std::string_view kSamplesMagic = "#redi samples v1";
inline constexpr std::string_view kTrajectoriesMagic = "#redi trajectories v1";

void write_coupling(std::ostream& out, const PairCoupling& c);
/// Parses and renormalizes into canonical form.
PairCoupling read_coupling(std::istream& in);

void write_distribution(std::ostream& out, const SparseDistribution& p);
/// Writes every one of the d^n states, zeros included.
void write_distribution(std::ostream& out, const DenseDistribution& p);
SparseDistribution read_distribution(std::istream& in);

/// Rows `<x0> | <x1> | <prob>` for positive entries only.
void write_kernel(std::ostream& out, const DenseKernel& k);
DenseKernel read_kernel(std::istream& in, std::uint64_t dense_cap = kDefaultDenseCap);

/// One state per row.
void write_samples(std::ostream& out, const StateSpace& space,
                   const std::vector<SequenceState>& samples);
std::vector<SequenceState> read_samples(std::istream& in, StateSpace* space = nullptr);

/// One trajectory per row, states separated by " | ".
void write_trajectories(std::ostream& out, const StateSpace& space,
                        const std::vector<std::vector<SequenceState>>& paths);

PairCoupling load_coupling(const std::filesystem::path& path);
SparseDistribution load_distribution(const std::filesystem::path& path);

/// Writes `content` byte-for-byte; throws Error on I/O failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace redi
