// tek: ingest -> retrieve -> pack -> mask -> pretrain -> finetune -> predict
// -> evaluate -> ablate, one subcommand per pipeline stage.

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tek/common.hpp"
#include "tek/corpus.hpp"
#include "tek/manifest.hpp"
#include "tek/masking.hpp"
#include "tek/metrics.hpp"
#include "tek/model.hpp"
#include "tek/packer.hpp"
#include "tek/pipeline.hpp"
#include "tek/retrieval.hpp"
#include "tek/tokenizer.hpp"
#include "tek/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonPaths {
    std::string corpus;
    std::string vocab;
    std::string dataset;
    std::string checkpoint;
    std::string out;
};

struct ModelFlags {
    int layers = 4;
    int heads = 4;
    int hidden = 128;
    int ffn = 512;
    int max_positions = 512;
    double dropout = 0.0;

    tek::EncoderConfig config(int vocab_size) const {
        tek::EncoderConfig cfg;
        cfg.layers = layers;
        cfg.heads = heads;
        cfg.hidden = hidden;
        cfg.ffn = ffn;
        cfg.max_positions = max_positions;
        cfg.vocab_size = vocab_size;
        cfg.dropout = dropout;
        return cfg;
    }
};

struct TrainFlags {
    double lr = 1e-3;
    int warmup = 0;
    int steps = 0;
    int epochs = 0;
    int batch = 8;
    uint64_t seed = 0;
    double weight_decay = 0.01;
    int checkpoint_every = 0;

    tek::TrainConfig config() const {
        tek::TrainConfig cfg;
        cfg.peak_lr = lr;
        cfg.warmup_steps = warmup;
        cfg.total_steps = steps;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.seed = seed;
        cfg.weight_decay = weight_decay;
        cfg.checkpoint_every = checkpoint_every;
        return cfg;
    }
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
    cmd->add_option("--layers", m.layers, "Encoder layers");
    cmd->add_option("--heads", m.heads, "Attention heads");
    cmd->add_option("--hidden", m.hidden, "Hidden size");
    cmd->add_option("--ffn", m.ffn, "Feed-forward size");
    cmd->add_option("--max-positions", m.max_positions, "Maximum sequence length");
    cmd->add_option("--dropout", m.dropout, "Dropout rate");
}

void add_train_flags(CLI::App* cmd, TrainFlags& t) {
    cmd->add_option("--lr", t.lr, "Peak learning rate");
    cmd->add_option("--warmup", t.warmup, "Warmup steps (0 = 5% of total)");
    cmd->add_option("--steps", t.steps, "Total training steps");
    cmd->add_option("--batch", t.batch, "Batch size");
    cmd->add_option("--seed", t.seed, "Random seed");
    cmd->add_option("--weight-decay", t.weight_decay, "Decoupled weight decay");
    cmd->add_option("--checkpoint-every", t.checkpoint_every,
                    "Periodic checkpoint interval (0 = final only)");
}

void add_pack_flags(CLI::App* cmd, tek::PackConfig& p) {
    cmd->add_option("--total-len", p.total_len, "Total packed length");
    cmd->add_option("--nc", p.n_c, "Context budget N_C");
    cmd->add_option("--nb", p.n_b, "Background budget N_B");
    cmd->add_option("--stride", p.stride, "Sliding window stride");
}

std::vector<std::string> read_lines(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

std::vector<std::string> read_lines_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    tek::require(in.good(), "cannot open file: " + path);
    return read_lines(in);
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    tek::require(out.good(), "cannot write file: " + path);
    for (const auto& l : lines) {
        out << l << '\n';
    }
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    tek::require(!ec, "cannot create output directory: " + dir);
}

json background_to_json(const tek::Background& bg) {
    return {{"entity_title", bg.entity_title},
            {"page_id", bg.sentence.page_id},
            {"sentence_index", bg.sentence.sentence_index},
            {"score", bg.score},
            {"tokens", bg.formatted_tokens}};
}

// ---- subcommand handlers ----

int run_ingest(const CommonPaths& paths, int vocab_size, const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::CorpusIndex index = tek::CorpusIndex::ingest(paths.corpus);
    index.save(paths.out + "/index.json");
    const tek::Vocab vocab = tek::Vocab::build(index, static_cast<size_t>(vocab_size));
    vocab.save(paths.out + "/vocab.txt");
    tek::write_manifest(paths.out, "ingest", {{"corpus", paths.corpus}}, config_dump);
    std::cout << "ingested " << index.stats().pages << " pages, " << index.stats().sentences
              << " sentences, " << index.stats().dangling_links
              << " dangling links; vocab size " << vocab.size() << "\n";
    return 0;
}

int run_retrieve(const CommonPaths& paths, const std::string& mode, int budget) {
    const tek::CorpusIndex index = tek::CorpusIndex::open(paths.corpus);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    const tek::CorpusTokens tokens(index, vocab);
    for (const auto& line : read_lines(std::cin)) {
        const json q = json::parse(line);
        json out;
        if (mode == "qa") {
            tek::QARecord record;
            record.question = q.at("question").get<std::string>();
            record.context = q.value("passage", std::string{});
            if (q.contains("passage_ref")) {
                std::vector<tek::SentenceRef> refs;
                for (const auto& jr : q.at("passage_ref")) {
                    refs.push_back(tek::SentenceRef{jr.at("page_id").get<std::string>(),
                                                    jr.at("sentence_index").get<int>()});
                }
                record.passage_ref = std::move(refs);
            }
            tek::RetrievalQuery query;
            query.mode = tek::QueryMode::kQa;
            query.query_tokens = tek::encode(record.question, vocab).ids;
            query.mentions = tek::link_qa_mentions(record, index);
            const auto ranked = tek::rank_backgrounds(query, tokens, record.passage_ref);
            json backgrounds = json::array();
            size_t used = 0;
            for (const auto& bg : ranked) {
                const size_t cost = bg.formatted_tokens.size() + 1;
                if (used + cost > static_cast<size_t>(budget)) {
                    continue;
                }
                used += cost;
                backgrounds.push_back(background_to_json(bg));
            }
            out = {{"backgrounds", backgrounds}};
        } else {
            const auto block =
                tek::block_at(tokens, q.at("page_id").get<std::string>(),
                              q.at("start").get<size_t>(), q.at("len").get<size_t>());
            const auto bg =
                tek::retrieve_pretrain_background(block, tokens, static_cast<size_t>(budget));
            json backgrounds = json::array();
            for (const auto& b : bg.backgrounds) {
                backgrounds.push_back(background_to_json(b));
            }
            out = {{"fallback", bg.fallback},
                   {"backgrounds", backgrounds},
                   {"fallback_tokens", bg.fallback_tokens}};
        }
        std::cout << out.dump() << "\n";
    }
    return 0;
}

int run_pack(const CommonPaths& paths, const std::string& mode, const tek::PackConfig& cfg,
             const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::CorpusIndex index = tek::CorpusIndex::open(paths.corpus);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    const tek::CorpusTokens tokens(index, vocab);
    std::vector<std::string> lines;
    if (mode == "rc") {
        const auto records = tek::load_qa_jsonl(paths.dataset);
        const auto examples = tek::build_qa_examples(records, tokens, cfg);
        lines.reserve(examples.size());
        for (const auto& ex : examples) {
            lines.push_back(tek::qa_example_to_json(ex));
        }
    } else {
        const auto packed = tek::build_pretrain_packed(tokens, cfg);
        lines.reserve(packed.size());
        for (const auto& p : packed) {
            lines.push_back(tek::packed_to_json(p));
        }
    }
    write_lines(paths.out + "/packed.jsonl", lines);
    tek::write_manifest(paths.out, "pack",
                        {{"corpus", paths.corpus},
                         {"vocab", paths.vocab},
                         {"dataset", paths.dataset.empty() ? "-" : paths.dataset}},
                        config_dump);
    std::cout << "packed " << lines.size() << " examples\n";
    return 0;
}

int run_mask(const std::string& in_path, const CommonPaths& paths,
             const tek::MaskConfig& mask_cfg, const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    std::vector<tek::PackedInput> packed;
    for (const auto& line : read_lines_file(in_path)) {
        packed.push_back(tek::packed_from_json(line));
    }
    const auto masked = tek::mask_packed(packed, mask_cfg, vocab);
    std::vector<std::string> lines;
    lines.reserve(masked.size());
    for (const auto& m : masked) {
        lines.push_back(tek::masked_to_json(m));
    }
    write_lines(paths.out + "/masked.jsonl", lines);
    tek::write_manifest(paths.out, "mask", {{"in", in_path}, {"vocab", paths.vocab}},
                        config_dump);
    std::cout << "masked " << lines.size() << " examples\n";
    return 0;
}

int run_pretrain(const std::string& data_path, const CommonPaths& paths, const ModelFlags& mf,
                 const TrainFlags& tf, const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    std::vector<tek::MaskedExample> data;
    for (const auto& line : read_lines_file(data_path)) {
        data.push_back(tek::masked_from_json(line));
    }
    tek::ModelState state =
        paths.checkpoint.empty()
            ? tek::ModelState::init(mf.config(static_cast<int>(vocab.size())), tf.seed)
            : tek::load_checkpoint(paths.checkpoint);
    tek::TrainConfig cfg = tf.config();
    cfg.checkpoint_dir = paths.out;
    const tek::TrainResult result = tek::pretrain(state, data, cfg);
    tek::save_checkpoint(state, paths.out + "/model.ckpt");
    tek::write_loss_csv(result, paths.out + "/train_log.csv");
    tek::write_manifest(paths.out, "pretrain",
                        {{"data", data_path}, {"vocab", paths.vocab}}, config_dump);
    if (!result.curve.empty()) {
        std::cout << "pretrained " << result.curve.size() << " steps, final loss "
                  << result.curve.back().loss << "\n";
    } else {
        std::cout << "pretrained 0 steps\n";
    }
    return 0;
}

int run_finetune(const std::string& data_path, const CommonPaths& paths, const ModelFlags& mf,
                 const TrainFlags& tf, const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    std::vector<tek::QAExample> data;
    for (const auto& line : read_lines_file(data_path)) {
        data.push_back(tek::qa_example_from_json(line));
    }
    tek::ModelState state =
        paths.checkpoint.empty()
            ? tek::ModelState::init(mf.config(static_cast<int>(vocab.size())), tf.seed)
            : tek::load_checkpoint(paths.checkpoint);
    tek::TrainConfig cfg = tf.config();
    cfg.checkpoint_dir = paths.out;
    const tek::TrainResult result = tek::finetune_qa(state, data, cfg);
    tek::save_checkpoint(state, paths.out + "/model.ckpt");
    tek::write_loss_csv(result, paths.out + "/train_log.csv");
    tek::write_manifest(paths.out, "finetune",
                        {{"data", data_path},
                         {"vocab", paths.vocab},
                         {"init", paths.checkpoint.empty() ? "-" : paths.checkpoint}},
                        config_dump);
    if (!result.curve.empty()) {
        std::cout << "finetuned " << result.curve.size() << " steps, final loss "
                  << result.curve.back().loss << "\n";
    } else {
        std::cout << "finetuned 0 steps\n";
    }
    return 0;
}

int run_predict(const std::string& data_path, const CommonPaths& paths, int max_answer_len,
                const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    const tek::ModelState state = tek::load_checkpoint(paths.checkpoint);
    std::vector<tek::QAExample> data;
    for (const auto& line : read_lines_file(data_path)) {
        data.push_back(tek::qa_example_from_json(line));
    }
    const auto predictions = tek::predict_examples(state, data, vocab, max_answer_len);
    std::vector<std::string> lines;
    lines.reserve(predictions.size());
    for (const auto& p : predictions) {
        lines.push_back(tek::prediction_to_json(p));
    }
    write_lines(paths.out + "/predictions.jsonl", lines);
    tek::write_manifest(paths.out, "predict",
                        {{"data", data_path}, {"ckpt", paths.checkpoint}}, config_dump);
    std::cout << "predicted " << predictions.size() << " questions\n";
    return 0;
}

int run_evaluate(const CommonPaths& paths, const tek::PackConfig& cfg, int max_answer_len,
                 const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::CorpusIndex index = tek::CorpusIndex::open(paths.corpus);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    const tek::CorpusTokens tokens(index, vocab);
    const tek::ModelState state = tek::load_checkpoint(paths.checkpoint);
    const auto records = tek::load_qa_jsonl(paths.dataset);
    const tek::EvalOutput out = tek::evaluate_dataset(state, records, tokens, cfg,
                                                      max_answer_len);
    std::ofstream metrics(paths.out + "/metrics.json", std::ios::binary);
    tek::require(metrics.good(), "cannot write metrics.json");
    metrics << tek::eval_report_json(out.report) << '\n';
    std::vector<std::string> lines;
    for (const auto& p : out.predictions) {
        lines.push_back(tek::prediction_to_json(p));
    }
    write_lines(paths.out + "/predictions.jsonl", lines);
    tek::write_manifest(paths.out, "evaluate",
                        {{"dataset", paths.dataset},
                         {"corpus", paths.corpus},
                         {"ckpt", paths.checkpoint}},
                        config_dump);
    std::cout << "em " << out.report.em << " f1 " << out.report.f1 << " n " << out.report.n
              << "\n";
    return 0;
}

int run_ablate(const CommonPaths& paths, int stride, const std::string& config_dump) {
    ensure_out_dir(paths.out);
    const tek::CorpusIndex index = tek::CorpusIndex::open(paths.corpus);
    const tek::Vocab vocab = tek::Vocab::load(paths.vocab);
    const tek::CorpusTokens tokens(index, vocab);
    const tek::ModelState state = tek::load_checkpoint(paths.checkpoint);
    const auto records = tek::load_qa_jsonl(paths.dataset);
    const auto rows = tek::run_ablation(state, records, tokens, stride);
    json jrows = json::array();
    std::cout << "  n_c   n_b      em      f1\n";
    for (const auto& row : rows) {
        jrows.push_back(
            {{"n_c", row.n_c}, {"n_b", row.n_b}, {"em", row.em}, {"f1", row.f1}, {"n", row.n}});
        std::printf("%5d %5d %7.2f %7.2f\n", row.n_c, row.n_b, row.em, row.f1);
    }
    std::ofstream out(paths.out + "/ablation.json", std::ios::binary);
    tek::require(out.good(), "cannot write ablation.json");
    out << json{{"rows", jrows}}.dump(2) << '\n';
    tek::write_manifest(paths.out, "ablate",
                        {{"dataset", paths.dataset},
                         {"corpus", paths.corpus},
                         {"ckpt", paths.checkpoint}},
                        config_dump);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TEK-enriched reading comprehension pipeline"};
    app.name("tek");
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file; flags override file values");
    app.get_config_formatter_base()->comment('#');

    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = runtime default)");

    CommonPaths paths;
    int vocab_size = 32000;
    std::string mode = "qa";
    int budget = 128;
    tek::PackConfig pack_cfg;
    tek::MaskConfig mask_cfg;
    ModelFlags model_flags;
    TrainFlags train_flags;
    std::string in_path;
    std::string data_path;
    int max_answer_len = 30;
    uint64_t mask_seed = 0;

    auto* ingest = app.add_subcommand("ingest", "Build a corpus index and vocabulary");
    ingest->add_option("--corpus", paths.corpus, "Corpus jsonl")->required();
    ingest->add_option("--out", paths.out, "Output directory")->required();
    ingest->add_option("--vocab-size", vocab_size, "Maximum vocabulary size");

    auto* retrieve =
        app.add_subcommand("retrieve", "Rank backgrounds for stdin queries (jsonl)");
    retrieve->add_option("--corpus", paths.corpus, "Corpus jsonl or saved index")->required();
    retrieve->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    retrieve->add_option("--mode", mode, "qa or pretrain")
        ->check(CLI::IsMember({"qa", "pretrain"}));
    retrieve->add_option("--budget", budget, "Background token budget N_B");

    auto* pack = app.add_subcommand("pack", "Pack examples into fixed-length inputs");
    pack->add_option("--corpus", paths.corpus, "Corpus jsonl or saved index")->required();
    pack->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    pack->add_option("--dataset", paths.dataset, "QA dataset jsonl (rc mode)");
    pack->add_option("--mode", mode, "rc or pretrain")
        ->check(CLI::IsMember({"rc", "pretrain"}));
    pack->add_option("--out", paths.out, "Output directory")->required();
    add_pack_flags(pack, pack_cfg);

    auto* mask = app.add_subcommand("mask", "Span-mask packed pretraining inputs");
    mask->add_option("--in", in_path, "Packed jsonl")->required();
    mask->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    mask->add_option("--out", paths.out, "Output directory")->required();
    mask->add_option("--rate", mask_cfg.mask_rate, "Masking rate");
    mask->add_option("--geom-p", mask_cfg.geom_p, "Geometric span-length parameter");
    mask->add_option("--max-span", mask_cfg.max_span, "Maximum span length");
    mask->add_option("--seed", mask_seed, "Random seed");

    auto* pre = app.add_subcommand("pretrain", "Train with the masked language objective");
    pre->add_option("--data", data_path, "Masked jsonl")->required();
    pre->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    pre->add_option("--out", paths.out, "Output directory")->required();
    pre->add_option("--init", paths.checkpoint, "Optional initial checkpoint");
    add_model_flags(pre, model_flags);
    add_train_flags(pre, train_flags);

    auto* fine = app.add_subcommand("finetune", "Train the QA span heads");
    fine->add_option("--data", data_path, "Packed QA jsonl")->required();
    fine->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    fine->add_option("--out", paths.out, "Output directory")->required();
    fine->add_option("--init", paths.checkpoint, "Optional initial checkpoint");
    fine->add_option("--epochs", train_flags.epochs, "Epochs (overrides --steps)");
    add_model_flags(fine, model_flags);
    add_train_flags(fine, train_flags);

    auto* predict = app.add_subcommand("predict", "Predict answers for packed QA windows");
    predict->add_option("--data", data_path, "Packed QA jsonl")->required();
    predict->add_option("--ckpt", paths.checkpoint, "Model checkpoint")->required();
    predict->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    predict->add_option("--out", paths.out, "Output directory")->required();
    predict->add_option("--max-answer-len", max_answer_len, "Maximum answer span length");

    auto* evaluate = app.add_subcommand("evaluate", "Pack, predict and score a dataset");
    evaluate->add_option("--dataset", paths.dataset, "QA dataset jsonl")->required();
    evaluate->add_option("--corpus", paths.corpus, "Corpus jsonl or saved index")->required();
    evaluate->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    evaluate->add_option("--ckpt", paths.checkpoint, "Model checkpoint")->required();
    evaluate->add_option("--out", paths.out, "Output directory")->required();
    evaluate->add_option("--max-answer-len", max_answer_len, "Maximum answer span length");
    add_pack_flags(evaluate, pack_cfg);

    auto* ablate =
        app.add_subcommand("ablate", "Evaluate one model across the N_C/N_B trade-off sweep");
    ablate->add_option("--dataset", paths.dataset, "QA dataset jsonl")->required();
    ablate->add_option("--corpus", paths.corpus, "Corpus jsonl or saved index")->required();
    ablate->add_option("--vocab", paths.vocab, "Vocabulary file")->required();
    ablate->add_option("--ckpt", paths.checkpoint, "Model checkpoint")->required();
    ablate->add_option("--out", paths.out, "Output directory")->required();
    ablate->add_option("--stride", pack_cfg.stride, "Sliding window stride");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (threads > 0) {
        omp_set_num_threads(threads);
    }
    mask_cfg.seed = mask_seed;

    const std::string config_dump = app.config_to_str(true, false);
    std::string stage = "cli";
    try {
        if (app.got_subcommand(ingest)) {
            stage = "ingest";
            return run_ingest(paths, vocab_size, config_dump);
        }
        if (app.got_subcommand(retrieve)) {
            stage = "retrieve";
            return run_retrieve(paths, mode, budget);
        }
        if (app.got_subcommand(pack)) {
            stage = "pack";
            if (mode != "pretrain") {
                tek::require(!paths.dataset.empty(), "pack --mode rc requires --dataset");
            }
            return run_pack(paths, mode == "pretrain" ? "pretrain" : "rc", pack_cfg,
                            config_dump);
        }
        if (app.got_subcommand(mask)) {
            stage = "mask";
            return run_mask(in_path, paths, mask_cfg, config_dump);
        }
        if (app.got_subcommand(pre)) {
            stage = "pretrain";
            return run_pretrain(data_path, paths, model_flags, train_flags, config_dump);
        }
        if (app.got_subcommand(fine)) {
            stage = "finetune";
            return run_finetune(data_path, paths, model_flags, train_flags, config_dump);
        }
        if (app.got_subcommand(predict)) {
            stage = "predict";
            return run_predict(data_path, paths, max_answer_len, config_dump);
        }
        if (app.got_subcommand(evaluate)) {
            stage = "evaluate";
            return run_evaluate(paths, pack_cfg, max_answer_len, config_dump);
        }
        if (app.got_subcommand(ablate)) {
            stage = "ablate";
            return run_ablate(paths, pack_cfg.stride, config_dump);
        }
        std::cerr << "error [cli]: no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error [" << stage << "]: " << e.what() << "\n";
        return 1;
    }
}
