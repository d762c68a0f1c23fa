#pragma once

#include <string>
#include <string_view>

namespace selfscore {

struct ParsedResponse {
    int score_bin = 0;
    std::string explanation;

    bool operator==(const ParsedResponse&) const = default;
};

// Embedded prompt resources (bytes of prompts/*.txt).
std::string_view scoring_prompt_text();
std::string_view judge_prompt_text();

std::string render_scoring_prompt();

// Scoring prompt followed by the assistant prefix "#Score: <bin>\n#Explain:".
std::string render_conditioned_prefix(int bin);

// Extracts the first "#Score:" integer and the first "#Explain:" text.
// Tag matching is case-insensitive; surrounding whitespace is tolerated.
ParsedResponse parse_response(std::string_view text);

// Swaps the integer after the first "#Score:" for new_bin, leaving every
// other byte untouched.
std::string replace_score_token(std::string_view text, int new_bin);

}  // namespace selfscore
