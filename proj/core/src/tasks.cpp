#include "palette/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "palette/errors.hpp"
#include "palette/rng.hpp"

namespace palette {

const char* metric_name(TaskMetric m) {
    switch (m) {
        case TaskMetric::kAccuracy: return "accuracy";
        case TaskMetric::kMatthews: return "matthews";
        case TaskMetric::kPearson: return "pearson";
    }
    return "?";
}

TaskMetric metric_from_name(const std::string& name) {
    for (TaskMetric m : {TaskMetric::kAccuracy, TaskMetric::kMatthews, TaskMetric::kPearson}) {
        if (name == metric_name(m)) return m;
    }
    throw ConfigError("unknown metric '" + name + "'");
}

void TaskSpec::validate() const {
    if (name.empty()) {
        throw ConfigError("task spec: empty name");
    }
    if (output_kind == OutputKind::kRegression) {
        if (metric != TaskMetric::kPearson) {
            throw ConfigError("task '" + name + "': regression tasks use the pearson metric");
        }
    } else {
        if (metric == TaskMetric::kPearson) {
            throw ConfigError("task '" + name + "': pearson requires a regression task");
        }
        if (n_classes < 1) {
            throw ConfigError("task '" + name + "': n_classes must be >= 1");
        }
        if (metric == TaskMetric::kMatthews && n_classes != 2) {
            throw ConfigError("task '" + name + "': matthews requires exactly 2 classes");
        }
    }
}

Vocab::Vocab() {
    for (const char* s : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) {
        ids_.emplace(s, static_cast<int>(tokens_.size()));
        tokens_.emplace_back(s);
    }
}

Vocab Vocab::closed(int n_content_tokens) {
    Vocab v;
    for (int i = 0; i < n_content_tokens; ++i) {
        v.add("w" + std::to_string(i));
    }
    return v;
}

int Vocab::add(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) {
        tokens_.push_back(token);
    }
    return it->second;
}

int Vocab::id_or_unk(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return ids_.count(token) > 0; }

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            cols.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cols.push_back(cur);
    return cols;
}

bool parse_label(const std::string& text, const TaskSpec& spec, double& out) {
    const char* s = text.c_str();
    char* end = nullptr;
    if (spec.output_kind == OutputKind::kClasses) {
        const long v = std::strtol(s, &end, 10);
        if (end == s || *end != '\0') return false;
        out = static_cast<double>(v);
    } else {
        const double v = std::strtod(s, &end);
        if (end == s || *end != '\0' || !std::isfinite(v)) return false;
        out = v;
    }
    return true;
}

}  // namespace

std::vector<Example> read_tsv(const std::string& path, const TaskSpec& spec) {
    spec.validate();
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open '" + path + "'");
    }
    const std::size_t want_cols = spec.input_kind == InputKind::kPair ? 3 : 2;
    std::vector<Example> out;
    std::string line;
    long long line_no = 0;
    bool first_data_line = true;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cols = split_tabs(line);
        if (cols.size() != want_cols) {
            throw ConfigError("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                              std::to_string(want_cols) + " tab-separated columns, got " +
                              std::to_string(cols.size()));
        }
        double label;
        if (!parse_label(cols.back(), spec, label)) {
            if (first_data_line) {
                first_data_line = false;  // header row
                continue;
            }
            throw ConfigError("'" + path + "' line " + std::to_string(line_no) +
                              ": cannot parse label '" + cols.back() + "'");
        }
        first_data_line = false;
        if (spec.output_kind == OutputKind::kClasses &&
            (label < 0 || label >= spec.n_classes)) {
            throw ConfigError("'" + path + "' line " + std::to_string(line_no) + ": label " +
                              cols.back() + " outside [0," + std::to_string(spec.n_classes) +
                              ")");
        }
        Example ex;
        ex.text_a = tokenize(cols[0]);
        if (spec.input_kind == InputKind::kPair) {
            ex.text_b = tokenize(cols[1]);
        }
        ex.label = label;
        out.push_back(std::move(ex));
    }
    return out;
}

TaskDataset load_tsv(const std::string& path, const TaskSpec& spec) {
    TaskDataset ds;
    ds.spec = spec;
    ds.train = read_tsv(path, spec);
    ds.spec.train_size = static_cast<long long>(ds.train.size());
    return ds;
}

TaskDataset load_tsv(const std::string& train_path, const std::string& dev_path,
                     const TaskSpec& spec) {
    TaskDataset ds = load_tsv(train_path, spec);
    ds.dev = read_tsv(dev_path, spec);
    return ds;
}

void write_tsv(const std::string& path, const TaskSpec& spec,
               const std::vector<Example>& examples) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    auto join = [](const std::vector<std::string>& toks) {
        std::string s;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) s.push_back(' ');
            s += toks[i];
        }
        return s;
    };
    char buf[40];
    for (const Example& ex : examples) {
        f << join(ex.text_a);
        if (spec.input_kind == InputKind::kPair) {
            f << '\t' << join(ex.text_b);
        }
        if (spec.output_kind == OutputKind::kClasses) {
            f << '\t' << ex.label_class() << '\n';
        } else {
            std::snprintf(buf, sizeof buf, "%.17g", ex.label);
            f << '\t' << buf << '\n';
        }
    }
    if (!f) {
        throw IoError("write failed for '" + path + "'");
    }
}

EncodedExample encode_example(const Example& ex, const Vocab& vocab, int max_len) {
    if (max_len < 3) {
        throw ConfigError("encode_example: max_len must be >= 3");
    }
    std::vector<std::string> a = ex.text_a;
    std::vector<std::string> b = ex.text_b;
    const bool pair = !ex.text_b.empty();
    // Truncate longest-first so both sides keep proportionate context; ties
    // trim the second sentence.
    if (pair) {
        const std::size_t budget = static_cast<std::size_t>(max_len) - 3;
        while (a.size() + b.size() > budget) {
            if (a.size() > b.size()) {
                a.pop_back();
            } else {
                b.pop_back();
            }
        }
    } else {
        const std::size_t budget = static_cast<std::size_t>(max_len) - 2;
        if (a.size() > budget) a.resize(budget);
    }
    EncodedExample enc;
    enc.label = ex.label;
    enc.ids.reserve(static_cast<std::size_t>(max_len));
    enc.ids.push_back(Vocab::kCls);
    for (const auto& t : a) enc.ids.push_back(vocab.id_or_unk(t));
    enc.ids.push_back(Vocab::kSep);
    const std::size_t first_block = enc.ids.size();
    if (pair) {
        for (const auto& t : b) enc.ids.push_back(vocab.id_or_unk(t));
        enc.ids.push_back(Vocab::kSep);
    }
    enc.real_len = static_cast<int>(enc.ids.size());
    enc.segments.assign(enc.ids.size(), 0);
    for (std::size_t i = first_block; i < enc.ids.size(); ++i) enc.segments[i] = 1;
    enc.mask.assign(enc.ids.size(), 1);
    enc.ids.resize(static_cast<std::size_t>(max_len), Vocab::kPad);
    enc.segments.resize(static_cast<std::size_t>(max_len), 0);
    enc.mask.resize(static_cast<std::size_t>(max_len), 0);
    return enc;
}

const char* synth_family_name(SynthFamily f) {
    switch (f) {
        case SynthFamily::kParity: return "parity";
        case SynthFamily::kMajority: return "majority";
        case SynthFamily::kOverlap: return "overlap";
        case SynthFamily::kAffinity: return "affinity";
    }
    return "?";
}

SynthFamily synth_family_from_name(const std::string& name) {
    for (SynthFamily f : {SynthFamily::kParity, SynthFamily::kMajority, SynthFamily::kOverlap,
                          SynthFamily::kAffinity}) {
        if (name == synth_family_name(f)) return f;
    }
    throw ConfigError("unknown synthetic family '" + name + "'");
}

double synth_label(SynthFamily family, const std::vector<std::string>& a,
                   const std::vector<std::string>& b) {
    switch (family) {
        case SynthFamily::kParity: {
            long long c = std::count(a.begin(), a.end(), "w0");
            return static_cast<double>(c % 2);
        }
        case SynthFamily::kMajority: {
            const long long ca = std::count(a.begin(), a.end(), "w0");
            const long long cb = std::count(a.begin(), a.end(), "w1");
            return ca > cb ? 0.0 : 1.0;
        }
        case SynthFamily::kOverlap: {
            const std::set<std::string> sa(a.begin(), a.end());
            for (const auto& t : b) {
                if (sa.count(t)) return 1.0;
            }
            return 0.0;
        }
        case SynthFamily::kAffinity: {
            const std::set<std::string> sa(a.begin(), a.end());
            const std::set<std::string> sb(b.begin(), b.end());
            if (sa.empty() && sb.empty()) return 0.0;
            std::size_t inter = 0;
            for (const auto& t : sa) inter += sb.count(t);
            const std::size_t uni = sa.size() + sb.size() - inter;
            return 5.0 * static_cast<double>(inter) / static_cast<double>(uni);
        }
    }
    throw std::logic_error("synth_label: bad family");
}

namespace {

void shuffle_tokens(std::vector<std::string>& toks, Rng& rng) {
    for (std::size_t i = toks.size(); i > 1; --i) {
        std::swap(toks[i - 1], toks[static_cast<std::size_t>(rng.below(static_cast<int>(i)))]);
    }
}

// Distinct content-token sample of the given size.
std::vector<std::string> sample_token_set(int n_content, int size, Rng& rng,
                                          int exclude_below = 0) {
    std::vector<int> pool;
    for (int i = exclude_below; i < n_content; ++i) pool.push_back(i);
    std::vector<std::string> out;
    for (int k = 0; k < size && !pool.empty(); ++k) {
        const int j = rng.below(static_cast<int>(pool.size()));
        out.push_back("w" + std::to_string(pool[static_cast<std::size_t>(j)]));
        pool.erase(pool.begin() + j);
    }
    return out;
}

Example make_synth_example(SynthFamily family, int n_content, Rng& rng) {
    Example ex;
    switch (family) {
        case SynthFamily::kParity: {
            const int len = 6 + rng.below(5);
            const int marked = rng.below(4);  // 0..3 occurrences of w0
            for (int i = 0; i < marked; ++i) ex.text_a.emplace_back("w0");
            while (static_cast<int>(ex.text_a.size()) < len) {
                ex.text_a.push_back("w" + std::to_string(1 + rng.below(n_content - 1)));
            }
            shuffle_tokens(ex.text_a, rng);
            break;
        }
        case SynthFamily::kMajority: {
            const int len = 6 + rng.below(5);
            int ca = 0, cb = 0;
            do {
                ca = 1 + rng.below(4);
                cb = 1 + rng.below(4);
            } while (ca == cb || ca + cb > len);
            for (int i = 0; i < ca; ++i) ex.text_a.emplace_back("w0");
            for (int i = 0; i < cb; ++i) ex.text_a.emplace_back("w1");
            while (static_cast<int>(ex.text_a.size()) < len) {
                ex.text_a.push_back("w" + std::to_string(2 + rng.below(n_content - 2)));
            }
            shuffle_tokens(ex.text_a, rng);
            break;
        }
        case SynthFamily::kOverlap: {
            const bool want_shared = rng.below(2) == 1;
            const int la = 2 + rng.below(2);
            const int lb = 2;
            // Partition the pool so the no-overlap case is airtight. Positive
            // pairs share a random number of tokens (>= 1): the label rule is
            // still "any shared token", but graded overlap gives the learner
            // a usable statistical signal.
            std::vector<std::string> all = sample_token_set(n_content, la + lb, rng);
            ex.text_a.assign(all.begin(), all.begin() + la);
            ex.text_b.assign(all.begin() + la, all.end());
            if (want_shared) {
                // Positives share the whole shorter side; the learnable
                // signal is the shared mass, the label stays "any shared
                // token" and negatives are airtight disjoint.
                const int n_shared = std::min(la, lb);
                for (int k = 0; k < n_shared; ++k) {
                    ex.text_b[static_cast<std::size_t>(k)] =
                        ex.text_a[static_cast<std::size_t>(k)];
                }
            }
            shuffle_tokens(ex.text_a, rng);
            shuffle_tokens(ex.text_b, rng);
            break;
        }
        case SynthFamily::kAffinity: {
            // Sample the intersection size directly so Jaccard targets spread
            // across the whole range.
            const int la = 2 + rng.below(3);
            const int lb = 2 + rng.below(2);
            const int inter = rng.below(std::min(la, lb) + 1);
            std::vector<std::string> all = sample_token_set(n_content, la + lb - inter, rng);
            ex.text_a.assign(all.begin(), all.begin() + la);
            ex.text_b.assign(all.begin() + la - inter, all.end());
            shuffle_tokens(ex.text_a, rng);
            shuffle_tokens(ex.text_b, rng);
            break;
        }
    }
    ex.label = synth_label(family, ex.text_a, ex.text_b);
    return ex;
}

std::string example_signature(const Example& ex) {
    std::string s;
    for (const auto& t : ex.text_a) {
        s += t;
        s.push_back(' ');
    }
    s.push_back('|');
    for (const auto& t : ex.text_b) {
        s += t;
        s.push_back(' ');
    }
    return s;
}

TaskSpec synth_spec_impl(SynthFamily family, long long size) {
    TaskSpec spec;
    spec.name = synth_family_name(family);
    spec.train_size = size;
    switch (family) {
        case SynthFamily::kParity:
        case SynthFamily::kMajority:
            spec.input_kind = InputKind::kSingle;
            spec.output_kind = OutputKind::kClasses;
            spec.n_classes = 2;
            spec.metric = TaskMetric::kAccuracy;
            break;
        case SynthFamily::kOverlap:
            spec.input_kind = InputKind::kPair;
            spec.output_kind = OutputKind::kClasses;
            spec.n_classes = 2;
            spec.metric = TaskMetric::kMatthews;
            break;
        case SynthFamily::kAffinity:
            spec.input_kind = InputKind::kPair;
            spec.output_kind = OutputKind::kRegression;
            spec.metric = TaskMetric::kPearson;
            break;
    }
    return spec;
}

}  // namespace

TaskSpec synth_task_spec(SynthFamily family, long long train_size) {
    return synth_spec_impl(family, train_size);
}

TaskDataset synth_generate(SynthFamily family, long long size, int vocab_size,
                           std::uint64_t seed, int dev_size) {
    const int n_content = vocab_size - 4;
    if (size < 1 || dev_size < 1) {
        throw ConfigError("synth_generate: sizes must be >= 1");
    }
    if (n_content < 8) {
        throw ConfigError("synth_generate: vocab_size must leave at least 8 content tokens");
    }
    TaskDataset ds;
    ds.spec = synth_spec_impl(family, size);
    Rng rng = Rng::derive(seed, 7001 + static_cast<std::uint64_t>(family));
    std::unordered_set<std::string> train_sigs;
    ds.train.reserve(static_cast<std::size_t>(size));
    for (long long i = 0; i < size; ++i) {
        Example ex = make_synth_example(family, n_content, rng);
        train_sigs.insert(example_signature(ex));
        ds.train.push_back(std::move(ex));
    }
    // Dev examples never collide with a training signature.
    ds.dev.reserve(static_cast<std::size_t>(dev_size));
    std::unordered_set<std::string> dev_sigs;
    int guard = 0;
    while (static_cast<int>(ds.dev.size()) < dev_size) {
        Example ex = make_synth_example(family, n_content, rng);
        const std::string sig = example_signature(ex);
        if (train_sigs.count(sig) || dev_sigs.count(sig)) {
            if (++guard > dev_size * 1000) {
                throw ConfigError("synth_generate: cannot draw a disjoint dev split; "
                                  "enlarge the vocabulary or shrink the dataset");
            }
            continue;
        }
        dev_sigs.insert(sig);
        ds.dev.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace palette
