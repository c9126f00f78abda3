#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "palette/model_config.hpp"

namespace palette {

enum class InputKind { kSingle, kPair };
enum class OutputKind { kClasses, kRegression };
enum class TaskMetric { kAccuracy, kMatthews, kPearson };

const char* metric_name(TaskMetric m);
TaskMetric metric_from_name(const std::string& name);

struct TaskSpec {
    std::string name;
    InputKind input_kind = InputKind::kSingle;
    OutputKind output_kind = OutputKind::kClasses;
    int n_classes = 2;
    TaskMetric metric = TaskMetric::kAccuracy;
    long long train_size = 0;

    // Metric/output compatibility: pearson iff regression; matthews needs
    // two classes.
    void validate() const;
};

struct Example {
    std::vector<std::string> text_a;
    std::vector<std::string> text_b;  // pair tasks only
    double label = 0.0;

    int label_class() const { return static_cast<int>(label); }
};

/// Token→id map with the four specials reserved at fixed ids.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;
    static constexpr int kSep = 2;
    static constexpr int kUnk = 3;

    Vocab();

    // Closed vocabulary w0..w{n-1} after the specials.
    static Vocab closed(int n_content_tokens);

    int add(const std::string& token);  // returns existing id if present
    int id_or_unk(const std::string& token) const;
    bool contains(const std::string& token) const;
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }

  private:
    std::unordered_map<std::string, int> ids_;
    std::vector<std::string> tokens_;
};

struct EncodedExample {
    std::vector<int> ids;            // padded to max_len
    std::vector<int> segments;       // 0s then 1s for pairs, 0 on padding
    std::vector<std::uint8_t> mask;  // 1 = real token
    int real_len = 0;
    double label = 0.0;
};

struct TaskDataset {
    TaskSpec spec;
    std::vector<Example> train;
    std::vector<Example> dev;
};

// Whitespace tokenizer.
std::vector<std::string> tokenize(const std::string& text);

// GLUE-style TSV: text_a<TAB>label for single tasks, text_a<TAB>text_b<TAB>label
// for pairs. An optional first line whose label column does not parse is
// treated as a header. Malformed rows and out-of-range labels report the
// 1-based line number.
std::vector<Example> read_tsv(const std::string& path, const TaskSpec& spec);

// read_tsv into a dataset's train split (dev optional).
TaskDataset load_tsv(const std::string& path, const TaskSpec& spec);
TaskDataset load_tsv(const std::string& train_path, const std::string& dev_path,
                     const TaskSpec& spec);

void write_tsv(const std::string& path, const TaskSpec& spec,
               const std::vector<Example>& examples);

// [CLS] a… [SEP] (+ b… [SEP]), truncated longest-first to fit max_len, then
// padded. Segments are 0 over the first sentence block, 1 over the second.
EncodedExample encode_example(const Example& ex, const Vocab& vocab, int max_len);

enum class SynthFamily {
    kParity,    // single: label = parity of the count of a marked token
    kMajority,  // single: which of two marked tokens occurs more often
    kOverlap,   // pair: do the two sides share at least one token
    kAffinity,  // pair, regression: 5 · Jaccard overlap of the token sets
};

const char* synth_family_name(SynthFamily f);
SynthFamily synth_family_from_name(const std::string& name);

// The task shape each family implies (input arity, output space, metric).
TaskSpec synth_task_spec(SynthFamily family, long long train_size);

// Deterministic synthetic dataset over the closed vocabulary w0..; train and
// dev splits are disjoint by token-sequence signature. Labels come straight
// from each family's generative rule.
TaskDataset synth_generate(SynthFamily family, long long size, int vocab_size,
                           std::uint64_t seed, int dev_size = 128);

// Rule evaluation used by the generators (and by oracle tests).
double synth_label(SynthFamily family, const std::vector<std::string>& a,
                   const std::vector<std::string>& b);

}  // namespace palette
