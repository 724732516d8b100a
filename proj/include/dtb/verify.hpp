#pragma once

#include <string>
#include <vector>

namespace dtb {

/// Self-check targets: architecture tables, gradient finite differences, and
/// the combination-count identities.
enum class VerifyTarget { Params, Grads, Combinatorics };

std::string to_string(VerifyTarget target);
VerifyTarget verify_target_from_string(const std::string& s); // PARAMS/GRADS/COMBINATORICS

struct VerifyReport {
    bool ok = true;
    std::vector<std::string> lines;    // one human-readable line per check
    std::vector<std::string> failures; // expected-vs-actual diffs, empty when ok
};

VerifyReport verify(VerifyTarget target);

} // namespace dtb
