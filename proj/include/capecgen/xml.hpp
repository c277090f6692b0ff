#pragma once

// Minimal non-validating XML reader sufficient for the MITRE catalog
// schemas: elements, attributes, character data, CDATA, comments,
// processing instructions and a skipped DOCTYPE. Errors carry the byte
// offset of the offending construct.

#include "capecgen/errors.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace capecgen::xml {

struct Node {
    bool is_text = false;
    std::string name;  // qualified element name; empty for text nodes
    std::string text;  // character data for text nodes
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Node> children;
    std::size_t offset = 0;

    // Name with any namespace prefix removed ("xhtml:p" -> "p").
    std::string_view local_name() const noexcept {
        std::string_view n = name;
        auto colon = n.find(':');
        return colon == std::string_view::npos ? n : n.substr(colon + 1);
    }

    std::optional<std::string_view> attr(std::string_view key) const noexcept {
        for (const auto& [k, v] : attributes) {
            if (k == key) return std::string_view(v);
        }
        return std::nullopt;
    }

    const Node* child(std::string_view local) const noexcept {
        for (const auto& c : children) {
            if (!c.is_text && c.local_name() == local) return &c;
        }
        return nullptr;
    }

    std::vector<const Node*> elements(std::string_view local) const {
        std::vector<const Node*> out;
        for (const auto& c : children) {
            if (!c.is_text && c.local_name() == local) out.push_back(&c);
        }
        return out;
    }

    // Pre-order visit of every descendant element (excluding this node).
    void for_each_descendant(const std::function<void(const Node&)>& fn) const {
        for (const auto& c : children) {
            if (c.is_text) continue;
            fn(c);
            c.for_each_descendant(fn);
        }
    }
};

struct Document {
    Node root;
};

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

class Reader {
public:
    explicit Reader(std::string_view src) : src_(src) {}

    Document parse() {
        Document doc;
        skip_bom();
        bool have_root = false;
        while (true) {
            skip_ws();
            if (pos_ >= src_.size()) break;
            if (src_[pos_] != '<') fail("text outside root element");
            if (starts_with("<?")) {
                skip_pi();
            } else if (starts_with("<!--")) {
                skip_comment();
            } else if (starts_with("<!DOCTYPE")) {
                skip_doctype();
            } else {
                if (have_root) fail("multiple root elements");
                doc.root = parse_element(0);
                have_root = true;
            }
        }
        if (!have_root) fail("no root element");
        return doc;
    }

private:
    static constexpr int kMaxDepth = 512;

    [[noreturn]] void fail(const std::string& what) const { throw XmlError(what, pos_); }
    [[noreturn]] void fail_at(const std::string& what, std::size_t at) const { throw XmlError(what, at); }

    bool starts_with(std::string_view s) const noexcept { return src_.substr(pos_, s.size()) == s; }

    static bool is_ws(char c) noexcept { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

    static bool is_name_char(char c) noexcept {
        auto u = static_cast<unsigned char>(c);
        return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9') || u == '_' ||
               u == ':' || u == '-' || u == '.' || u >= 0x80;
    }

    void skip_bom() {
        if (starts_with("\xEF\xBB\xBF")) pos_ += 3;
    }

    void skip_ws() {
        while (pos_ < src_.size() && is_ws(src_[pos_])) ++pos_;
    }

    void skip_until(std::string_view terminator, const char* what) {
        auto start = pos_;
        auto end = src_.find(terminator, pos_);
        if (end == std::string_view::npos) fail_at(std::string("unterminated ") + what, start);
        pos_ = end + terminator.size();
    }

    void skip_pi() { skip_until("?>", "processing instruction"); }
    void skip_comment() { skip_until("-->", "comment"); }

    void skip_doctype() {
        auto start = pos_;
        int depth = 0;
        for (; pos_ < src_.size(); ++pos_) {
            char c = src_[pos_];
            if (c == '[') ++depth;
            if (c == ']') --depth;
            if (c == '>' && depth == 0) {
                ++pos_;
                return;
            }
        }
        fail_at("unterminated DOCTYPE", start);
    }

    std::string parse_name() {
        auto start = pos_;
        while (pos_ < src_.size() && is_name_char(src_[pos_])) ++pos_;
        if (pos_ == start) fail("expected a name");
        return std::string(src_.substr(start, pos_ - start));
    }

    // Decodes character data in [begin, end) into out, resolving references.
    void decode_into(std::string& out, std::size_t begin, std::size_t end) const {
        out.reserve(out.size() + (end - begin));
        for (std::size_t i = begin; i < end;) {
            char c = src_[i];
            if (c != '&') {
                out.push_back(c);
                ++i;
                continue;
            }
            auto semi = src_.find(';', i);
            if (semi == std::string_view::npos || semi >= end) fail_at("unterminated entity reference", i);
            std::string_view ent = src_.substr(i + 1, semi - i - 1);
            if (ent == "lt") {
                out.push_back('<');
            } else if (ent == "gt") {
                out.push_back('>');
            } else if (ent == "amp") {
                out.push_back('&');
            } else if (ent == "quot") {
                out.push_back('"');
            } else if (ent == "apos") {
                out.push_back('\'');
            } else if (!ent.empty() && ent[0] == '#') {
                std::uint32_t cp = 0;
                bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
                std::string_view digits = ent.substr(hex ? 2 : 1);
                if (digits.empty()) fail_at("empty character reference", i);
                for (char d : digits) {
                    std::uint32_t v;
                    if (d >= '0' && d <= '9') {
                        v = static_cast<std::uint32_t>(d - '0');
                    } else if (hex && d >= 'a' && d <= 'f') {
                        v = static_cast<std::uint32_t>(d - 'a' + 10);
                    } else if (hex && d >= 'A' && d <= 'F') {
                        v = static_cast<std::uint32_t>(d - 'A' + 10);
                    } else {
                        fail_at("bad character reference", i);
                    }
                    cp = cp * (hex ? 16 : 10) + v;
                    if (cp > 0x10FFFF) fail_at("character reference out of range", i);
                }
                append_utf8(out, cp);
            } else {
                fail_at("unknown entity '&" + std::string(ent) + ";'", i);
            }
            i = semi + 1;
        }
    }

    Node parse_element(int depth) {
        if (depth > kMaxDepth) fail("element nesting too deep");
        Node node;
        node.offset = pos_;
        ++pos_;  // '<'
        node.name = parse_name();
        while (true) {
            skip_ws();
            if (pos_ >= src_.size()) fail_at("unterminated start tag <" + node.name + ">", node.offset);
            if (src_[pos_] == '/') {
                if (!starts_with("/>")) fail("expected '/>'");
                pos_ += 2;
                return node;
            }
            if (src_[pos_] == '>') {
                ++pos_;
                break;
            }
            auto attr_at = pos_;
            auto attr_name = parse_name();
            if (node.attr(attr_name)) fail_at("duplicate attribute " + attr_name, attr_at);
            skip_ws();
            if (pos_ >= src_.size() || src_[pos_] != '=') fail("expected '=' after attribute " + attr_name);
            ++pos_;
            skip_ws();
            if (pos_ >= src_.size() || (src_[pos_] != '"' && src_[pos_] != '\'')) fail("expected quoted attribute value");
            char quote = src_[pos_++];
            auto close = src_.find(quote, pos_);
            if (close == std::string_view::npos) fail("unterminated attribute value");
            std::string value;
            decode_into(value, pos_, close);
            pos_ = close + 1;
            node.attributes.emplace_back(std::move(attr_name), std::move(value));
        }

        std::string pending;
        std::size_t pending_offset = pos_;
        auto flush_text = [&] {
            if (pending.empty()) return;
            Node t;
            t.is_text = true;
            t.text = std::move(pending);
            t.offset = pending_offset;
            node.children.push_back(std::move(t));
            pending.clear();
        };

        while (true) {
            if (pos_ >= src_.size()) fail_at("unclosed element <" + node.name + ">", node.offset);
            if (src_[pos_] != '<') {
                if (pending.empty()) pending_offset = pos_;
                auto next = src_.find('<', pos_);
                if (next == std::string_view::npos) next = src_.size();
                decode_into(pending, pos_, next);
                pos_ = next;
                continue;
            }
            if (starts_with("</")) {
                flush_text();
                auto at = pos_;
                pos_ += 2;
                auto closing = parse_name();
                skip_ws();
                if (pos_ >= src_.size() || src_[pos_] != '>') fail("expected '>' in end tag");
                ++pos_;
                if (closing != node.name) {
                    fail_at("mismatched end tag </" + closing + ">, expected </" + node.name + ">", at);
                }
                return node;
            }
            if (starts_with("<!--")) {
                skip_comment();
            } else if (starts_with("<![CDATA[")) {
                auto start = pos_ + 9;
                auto end = src_.find("]]>", start);
                if (end == std::string_view::npos) fail("unterminated CDATA section");
                if (pending.empty()) pending_offset = pos_;
                pending.append(src_.substr(start, end - start));
                pos_ = end + 3;
            } else if (starts_with("<?")) {
                skip_pi();
            } else {
                flush_text();
                node.children.push_back(parse_element(depth + 1));
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline Document parse(std::string_view src) { return detail::Reader(src).parse(); }

}  // namespace capecgen::xml
