// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <agenttune/common.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agenttune {

class PromptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Plain-text template with {UPPERCASE} placeholders. Other braces (JSON
/// examples inside the text) are left alone.
class PromptTemplate {
public:
    PromptTemplate() = default;
    PromptTemplate(std::string name, std::string text, std::vector<std::string> required);

    std::string render(const std::map<std::string, std::string>& values) const;

    const std::string& name() const { return name_; }
    const std::string& text() const { return text_; }
    const std::vector<std::string>& required() const { return required_; }

private:
    std::string name_;
    std::string text_;
    std::vector<std::string> required_;
};

struct PromptSet {
    PromptTemplate propose;
    PromptTemplate select;
    PromptTemplate filter;
    PromptTemplate insights;
    PromptTemplate vote;
    PromptTemplate extract;
    PromptTemplate summarize;

    static PromptSet defaults();
    /// Defaults, with any `<name>.txt` found in `dir` taking precedence.
    static PromptSet load(const std::filesystem::path& dir);
};

/// Renders structured context as a named fenced block ("```json <name>").
/// The same block is readable by a model and by the offline backends.
std::string fenced_block(std::string_view name, const json& payload);

/// Finds and parses the named block in `text`.
std::optional<json> find_block(std::string_view text, std::string_view name);

/// JSON payload of a model response: the first fenced block if present,
/// otherwise the whole trimmed text.
std::optional<json> response_payload(std::string_view text);

} // namespace agenttune
