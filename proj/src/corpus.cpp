#include "tek/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "tek/common.hpp"
#include "tek/utf8.hpp"

namespace tek {

using nlohmann::json;

std::string normalize_surface(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        if (c >= 'A' && c <= 'Z') {
            out.push_back(static_cast<char>(c + 32));
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

namespace {

Page parse_page_line(const std::string& line, size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        fail("corpus line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    Page page;
    try {
        page.page_id = j.at("page_id").get<std::string>();
        page.title = j.at("title").get<std::string>();
        for (const auto& js : j.at("sentences")) {
            Sentence sent;
            sent.text = js.at("text").get<std::string>();
            const utf8::Decoded d = utf8::decode(sent.text);
            if (js.contains("links")) {
                for (const auto& jl : js.at("links")) {
                    Mention m;
                    m.start = jl.at("start").get<int>();
                    m.end = jl.at("end").get<int>();
                    m.target = jl.at("target").get<std::string>();
                    if (!(0 <= m.start && m.start < m.end &&
                          static_cast<size_t>(m.end) <= d.size())) {
                        fail("corpus line " + std::to_string(line_no) +
                             ": link offsets out of range");
                    }
                    m.surface = utf8::slice(sent.text, d, static_cast<size_t>(m.start),
                                            static_cast<size_t>(m.end));
                    sent.links.push_back(std::move(m));
                }
            }
            page.sentences.push_back(std::move(sent));
        }
    } catch (const json::exception& e) {
        fail("corpus line " + std::to_string(line_no) + ": bad page record (" + e.what() + ")");
    }
    require(!page.page_id.empty(),
            "corpus line " + std::to_string(line_no) + ": empty page_id");
    require(!page.title.empty(), "corpus line " + std::to_string(line_no) + ": empty title");
    return page;
}

}  // namespace

CorpusIndex CorpusIndex::ingest_jsonl(const std::string& text, const std::string& origin) {
    CorpusIndex index;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        Page page = parse_page_line(line, line_no);
        if (index.id_to_idx_.count(page.page_id) != 0) {
            fail("corpus line " + std::to_string(line_no) + ": duplicate page_id '" +
                 page.page_id + "'");
        }
        index.id_to_idx_.emplace(page.page_id, index.pages_.size());
        index.pages_.push_back(std::move(page));
    }
    require(!index.pages_.empty(), "empty corpus: " + origin);
    index.finalize();
    return index;
}

CorpusIndex CorpusIndex::ingest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open corpus file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return ingest_jsonl(buf.str(), path);
}

void CorpusIndex::finalize() {
    stats_ = CorpusStats{};
    stats_.pages = pages_.size();
    // mark dangling links, then build aliases from titles + resolvable links
    for (auto& page : pages_) {
        stats_.sentences += page.sentences.size();
        for (auto& sent : page.sentences) {
            for (auto& link : sent.links) {
                link.dangling = id_to_idx_.count(link.target) == 0;
                if (link.dangling) {
                    ++stats_.dangling_links;
                }
            }
        }
    }
    std::map<std::string, std::map<std::string, size_t>> counts;
    for (const auto& page : pages_) {
        counts[normalize_surface(page.title)][page.page_id];  // count 0 entry
        for (const auto& sent : page.sentences) {
            for (const auto& link : sent.links) {
                if (!link.dangling) {
                    ++counts[normalize_surface(link.surface)][link.target];
                }
            }
        }
    }
    aliases_.clear();
    max_alias_len_ = 0;
    for (auto& [key, per_page] : counts) {
        if (key.empty()) {
            continue;
        }
        AliasEntry entry;
        size_t best_count = 0;
        for (auto& [page_id, count] : per_page) {
            entry.pages.emplace_back(page_id, count);
            if (entry.best.empty() || count > best_count) {
                entry.best = page_id;
                best_count = count;
            }
            // ties keep the earlier (lexicographically smaller) page_id
        }
        max_alias_len_ = std::max(max_alias_len_, utf8::length(key));
        aliases_.emplace(key, std::move(entry));
    }
}

const Page& CorpusIndex::page(const std::string& page_id) const {
    auto it = id_to_idx_.find(page_id);
    require(it != id_to_idx_.end(), "unknown page_id: " + page_id);
    return pages_[it->second];
}

bool CorpusIndex::has_page(const std::string& page_id) const {
    return id_to_idx_.count(page_id) != 0;
}

const std::vector<Sentence>& CorpusIndex::sentences_of(const std::string& page_id) const {
    return page(page_id).sentences;
}

std::vector<Mention> CorpusIndex::link_entities(const std::string& text) const {
    std::vector<Mention> out;
    if (aliases_.empty()) {
        return out;
    }
    const utf8::Decoded d = utf8::decode(text);
    const size_t n = d.size();
    // normalized candidates can never be longer than the longest alias key
    const size_t max_norm = max_alias_len_;
    size_t i = 0;
    while (i < n) {
        std::string candidate;
        size_t norm_len = 0;
        size_t best_end = 0;
        const AliasEntry* best_entry = nullptr;
        bool pending_space = false;
        for (size_t j = i; j < n; ++j) {
            const uint32_t cp = d.codepoints[j];
            const bool space = cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' ||
                               cp == '\f' || cp == '\v';
            if (space) {
                if (candidate.empty()) {
                    break;  // matches never begin on whitespace
                }
                pending_space = true;
                continue;
            }
            if (pending_space) {
                candidate.push_back(' ');
                pending_space = false;
                ++norm_len;
            }
            utf8::append(candidate, cp < 128 && cp >= 'A' && cp <= 'Z' ? cp + 32 : cp);
            if (++norm_len > max_norm) {
                break;
            }
            auto it = aliases_.find(candidate);
            if (it != aliases_.end()) {
                best_end = j + 1;
                best_entry = &it->second;
            }
        }
        if (best_entry != nullptr) {
            Mention m;
            m.start = static_cast<int>(i);
            m.end = static_cast<int>(best_end);
            m.surface = utf8::slice(text, d, i, best_end);
            m.target = best_entry->best;
            out.push_back(std::move(m));
            i = best_end;
        } else {
            ++i;
        }
    }
    return out;
}

std::string CorpusIndex::serialize() const {
    json jpages = json::array();
    for (const auto& page : pages_) {
        json jsents = json::array();
        for (const auto& sent : page.sentences) {
            json jlinks = json::array();
            for (const auto& link : sent.links) {
                jlinks.push_back({{"start", link.start},
                                  {"end", link.end},
                                  {"target", link.target},
                                  {"dangling", link.dangling}});
            }
            jsents.push_back({{"text", sent.text}, {"links", jlinks}});
        }
        jpages.push_back(
            {{"page_id", page.page_id}, {"title", page.title}, {"sentences", jsents}});
    }
    json root = {{"tek_index_version", 1},
                 {"stats",
                  {{"pages", stats_.pages},
                   {"sentences", stats_.sentences},
                   {"dangling_links", stats_.dangling_links}}},
                 {"pages", jpages}};
    return root.dump();
}

void CorpusIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write index file: " + path);
    out << serialize();
}

CorpusIndex CorpusIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open index file: " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        fail("index file " + path + ": invalid JSON (" + std::string(e.what()) + ")");
    }
    require(root.contains("tek_index_version") && root["tek_index_version"] == 1,
            "index file " + path + ": unsupported version");
    CorpusIndex index;
    for (const auto& jp : root.at("pages")) {
        Page page;
        page.page_id = jp.at("page_id").get<std::string>();
        page.title = jp.at("title").get<std::string>();
        for (const auto& js : jp.at("sentences")) {
            Sentence sent;
            sent.text = js.at("text").get<std::string>();
            const utf8::Decoded d = utf8::decode(sent.text);
            for (const auto& jl : js.at("links")) {
                Mention m;
                m.start = jl.at("start").get<int>();
                m.end = jl.at("end").get<int>();
                m.target = jl.at("target").get<std::string>();
                m.surface = utf8::slice(sent.text, d, static_cast<size_t>(m.start),
                                        static_cast<size_t>(m.end));
                sent.links.push_back(std::move(m));
            }
            page.sentences.push_back(std::move(sent));
        }
        require(index.id_to_idx_.count(page.page_id) == 0,
                "index file " + path + ": duplicate page_id '" + page.page_id + "'");
        index.id_to_idx_.emplace(page.page_id, index.pages_.size());
        index.pages_.push_back(std::move(page));
    }
    require(!index.pages_.empty(), "empty corpus: " + path);
    index.finalize();
    return index;
}

CorpusIndex CorpusIndex::open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open corpus file: " + path);
    std::string first_line;
    std::getline(in, first_line);
    in.close();
    // a saved index is one JSON document with a version key; anything else is
    // treated as corpus jsonl
    try {
        const json j = json::parse(first_line);
        if (j.is_object() && j.contains("tek_index_version")) {
            return load(path);
        }
    } catch (const json::exception&) {
    }
    return ingest(path);
}

}  // namespace tek
