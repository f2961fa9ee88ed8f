#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "vtp/llm_gateway.hpp"

namespace vtp::mock {

/// Rates that steer the offline stand-in. Every choice is derived from the request digest, so the
/// same request always gets the same reply.
struct MockProfile {
    double malformed_rate = 0.04;          // generator drafts missing their Code section
    double tests_good_rate = 0.12;         // grader rates test_case_quality Good (repairable)
    double definition_fair_rate = 0.08;    // grader rates problem_definition Fair (rejected)
    double regrade_excellent_rate = 0.9;
    double solver_correct_rate = 0.8;
};

/// Parameters embedded in mock statements as "(mock parameters: hc_a=1 hc_b=4)", in order.
using MockParams = std::vector<std::pair<std::string, long>>;

MockParams parse_mock_parameters(std::string_view text);

/// The reference program for a parameter set; the archetypes are named by the key prefixes.
std::string mock_program(const MockParams& params);

/// Dispatches on the role header of the system text (generator, test_cases, repair_tests, grader,
/// regrade_tests, solver, decompose, dedup, distill, classify).
llm::MockTransport::Responder make_responder(MockProfile profile = {});

std::shared_ptr<llm::Transport> make_transport(MockProfile profile = {});

}  // namespace vtp::mock
