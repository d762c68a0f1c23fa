#include "selfscore/prompting.hpp"

#include <cctype>
#include <cstddef>

#include "selfscore/errors.hpp"

namespace selfscore {

namespace detail {
extern const char scoring_prompt[];
extern const unsigned long scoring_prompt_len;
extern const char judge_prompt[];
extern const unsigned long judge_prompt_len;
}  // namespace detail

std::string_view scoring_prompt_text() {
    return {detail::scoring_prompt, detail::scoring_prompt_len};
}

std::string_view judge_prompt_text() {
    return {detail::judge_prompt, detail::judge_prompt_len};
}

std::string render_scoring_prompt() {
    return std::string(scoring_prompt_text());
}

std::string render_conditioned_prefix(int bin) {
    if (bin < 0 || bin > 9) throw BinOutOfRange(bin);
    std::string out = render_scoring_prompt();
    out += "#Score: ";
    out += static_cast<char>('0' + bin);
    out += "\n#Explain:";
    return out;
}

namespace {

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

// First case-insensitive occurrence of tag in text, or npos.
std::size_t find_tag(std::string_view text, std::string_view tag) {
    if (tag.size() > text.size()) return std::string_view::npos;
    for (std::size_t i = 0; i + tag.size() <= text.size(); ++i) {
        bool hit = true;
        for (std::size_t j = 0; j < tag.size(); ++j) {
            if (std::tolower(static_cast<unsigned char>(text[i + j])) != tag[j]) {
                hit = false;
                break;
            }
        }
        if (hit) return i;
    }
    return std::string_view::npos;
}

// Span [begin, end) of the score token following the first "#score:".
std::pair<std::size_t, std::size_t> score_token_span(std::string_view text) {
    std::size_t tag = find_tag(text, "#score:");
    if (tag == std::string_view::npos) throw FormatError("missing #Score: tag");
    std::size_t i = tag + 7;
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t begin = i;
    while (i < text.size() && !is_space(text[i]) && text[i] != '#') ++i;
    if (i == begin) throw FormatError("no score after #Score: tag");
    return {begin, i};
}

int parse_score_token(std::string_view token) {
    std::size_t i = 0;
    if (token[0] == '-') i = 1;
    if (i == token.size()) throw FormatError("score is not an integer: '" + std::string(token) + "'");
    long value = 0;
    for (; i < token.size(); ++i) {
        char c = token[i];
        if (c < '0' || c > '9')
            throw FormatError("score is not an integer: '" + std::string(token) + "'");
        value = value * 10 + (c - '0');
        if (value > 1000) break;
    }
    if (token[0] == '-') value = -value;
    if (value < 0 || value > 9)
        throw FormatError("score " + std::string(token) + " outside 0..9");
    return static_cast<int>(value);
}

std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

// The scoring prompt illustrates the tags literally ("#Score: integer"), so
// a prompt+response string must be parsed past that prefix.
std::size_t response_offset(std::string_view text) {
    std::string_view prompt = scoring_prompt_text();
    if (text.substr(0, prompt.size()) == prompt) return prompt.size();
    return 0;
}

}  // namespace

ParsedResponse parse_response(std::string_view text) {
    text.remove_prefix(response_offset(text));
    auto [tok_begin, tok_end] = score_token_span(text);
    ParsedResponse out;
    out.score_bin = parse_score_token(text.substr(tok_begin, tok_end - tok_begin));

    std::size_t etag = find_tag(text, "#explain:");
    if (etag == std::string_view::npos) throw FormatError("missing #Explain: tag");
    std::string_view expl = trim(text.substr(etag + 9));
    if (expl.empty()) throw FormatError("empty explanation");
    out.explanation = std::string(expl);
    return out;
}

std::string replace_score_token(std::string_view text, int new_bin) {
    if (new_bin < 0 || new_bin > 9) throw BinOutOfRange(new_bin);
    parse_response(text);  // validates format
    std::size_t offset = response_offset(text);
    auto [begin, end] = score_token_span(text.substr(offset));
    std::string out(text.substr(0, offset + begin));
    out += static_cast<char>('0' + new_bin);
    out += text.substr(offset + end);
    return out;
}

}  // namespace selfscore
