// Command-line entry point for the hybrid text-speech sequence toolkit.
// Every subcommand is deterministic given --seed; exit codes: 0 success,
// 1 validation error, 2 I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hybridlm/config.hpp"
#include "hybridlm/corpus.hpp"
#include "hybridlm/delay.hpp"
#include "hybridlm/dialog.hpp"
#include "hybridlm/duplex.hpp"
#include "hybridlm/interleave.hpp"
#include "hybridlm/loss.hpp"
#include "hybridlm/metrics.hpp"
#include "hybridlm/model.hpp"
#include "hybridlm/synth.hpp"
#include "hybridlm/token_space.hpp"

using namespace hybridlm;
using nlohmann::json;

namespace {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<json> read_json_lines(const std::string& path) {
    std::vector<json> out;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        json j = json::parse(lines[i], nullptr, false);
        if (j.is_discarded()) throw RecordParseError(i + 1, "malformed JSON");
        out.push_back(std::move(j));
    }
    return out;
}

void write_json_lines(const std::string& path, const std::vector<json>& records) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const json& j : records) lines.push_back(j.dump());
    write_lines(path, lines);
}

void write_report(const std::string& out_path,
                  const std::vector<std::tuple<std::string, double, size_t>>& rows) {
    std::ostringstream ss;
    ss << "metric value count\n";
    for (const auto& [metric, value, count] : rows)
        ss << metric << " " << value << " " << count << "\n";
    if (out_path.empty()) {
        std::cout << ss.str();
    } else {
        std::ofstream f(out_path);
        if (!f) throw IoError("cannot open " + out_path + " for writing");
        f << ss.str();
    }
}

// dialog sample record: query (+query_features), voice, response text/frames
struct DialogSample {
    Query query;
    int voice = 0;
    std::vector<int32_t> text;
    std::vector<Frame> frames;
};

DialogSample dialog_from_json(const json& j, size_t line) {
    DialogSample d;
    try {
        if (j.contains("query")) d.query.text = j.at("query").get<std::vector<int32_t>>();
        if (j.contains("query_frames"))
            d.query.frames = j.at("query_frames").get<std::vector<Frame>>();
        if (j.contains("query_features"))
            d.query.features = j.at("query_features").get<std::vector<std::vector<double>>>();
        d.voice = j.value("voice", 0);
        if (j.contains("text")) d.text = j.at("text").get<std::vector<int32_t>>();
        if (j.contains("frames")) d.frames = j.at("frames").get<std::vector<Frame>>();
    } catch (const json::exception& e) {
        throw RecordParseError(line, e.what());
    }
    return d;
}

json dialog_to_json(const DialogSample& d) {
    json j;
    if (!d.query.text.empty()) j["query"] = d.query.text;
    if (!d.query.frames.empty()) j["query_frames"] = d.query.frames;
    if (!d.query.features.empty()) j["query_features"] = d.query.features;
    j["voice"] = d.voice;
    j["text"] = d.text;
    j["frames"] = d.frames;
    return j;
}

SynthConfig synth_config_from_kv(const KvMap& kv) {
    SynthConfig cfg;
    cfg.vocab = vocab_from_kv(kv);
    cfg.ratio.n = (int)kv_int(kv, "n", 4);
    cfg.ratio.m = (int)kv_int(kv, "m", 12);
    cfg.num_dialogs = (int)kv_int(kv, "num_dialogs", 32);
    cfg.num_voices = (int)kv_int(kv, "num_voices", 2);
    cfg.query_len_min = (int)kv_int(kv, "query_len_min", 3);
    cfg.query_len_max = (int)kv_int(kv, "query_len_max", 5);
    cfg.text_len_min = (int)kv_int(kv, "text_len_min", 4);
    cfg.text_len_max = (int)kv_int(kv, "text_len_max", 6);
    cfg.frames_min = (int)kv_int(kv, "frames_min", 6);
    cfg.frames_max = (int)kv_int(kv, "frames_max", 10);
    cfg.speaker_dim = (int)kv_int(kv, "speaker_dim", 8);
    cfg.seed = (uint64_t)kv_int(kv, "synth_seed", 1234);
    cfg.query_as_features = kv_int(kv, "query_as_features", 0) != 0;
    cfg.adapter_in_dim = (int)kv_int(kv, "adapter_in_dim", 8);
    return cfg;
}

// ---- subcommand bodies ----

int cmd_interleave(const std::string& in, const std::string& out, int n, int m) {
    InterleaveConfig cfg{n, m};
    auto records = read_seq_records(in);
    for (auto& rec : records) {
        interleave(rec.text, rec.frames, cfg);  // validates cfg and frame data
        rec.schedule = cfg;
    }
    write_seq_records(out, records);
    return 0;
}

int cmd_deinterleave(const std::string& in, const std::string& out) {
    auto records = read_seq_records(in);
    for (auto& rec : records) {
        if (!rec.schedule) throw std::invalid_argument("record is missing its schedule");
        HybridSeq seq = interleave(rec.text, rec.frames, *rec.schedule);
        if (check_schedule(seq, *rec.schedule))
            throw std::invalid_argument("record violates its schedule");
        std::vector<int32_t> y;
        std::vector<Frame> z;
        deinterleave(seq, y, z);
        rec.text = std::move(y);
        rec.frames = std::move(z);
        rec.schedule.reset();
    }
    write_seq_records(out, records);
    return 0;
}

int cmd_delay(const std::string& in, const std::string& out, const std::string& config) {
    VocabSpec spec = vocab_from_kv(parse_kv_file(config));
    auto records = read_json_lines(in);
    std::vector<json> output;
    for (size_t i = 0; i < records.size(); ++i) {
        SeqRecord rec = seq_record_from_json(records[i], i + 1);
        DelayGrid grid = apply_delay(rec.frames, spec.num_codebooks(), spec.pad_audio_id);
        json j = rec.extra.is_object() ? rec.extra : json::object();
        if (!rec.text.empty()) j["text"] = rec.text;
        j["grid"] = grid.rows;
        output.push_back(std::move(j));
    }
    write_json_lines(out, output);
    return 0;
}

int cmd_undelay(const std::string& in, const std::string& out, const std::string& config) {
    VocabSpec spec = vocab_from_kv(parse_kv_file(config));
    auto records = read_json_lines(in);
    std::vector<json> output;
    for (size_t i = 0; i < records.size(); ++i) {
        const json& j = records[i];
        if (!j.contains("grid")) throw RecordParseError(i + 1, "record has no grid");
        DelayGrid grid;
        grid.rows = j.at("grid").get<std::vector<std::vector<int32_t>>>();
        grid.num_codebooks = (int)grid.rows.size();
        grid.pad_id = spec.pad_audio_id;
        grid.num_frames = grid.rows.empty() || grid.rows[0].empty()
                              ? 0
                              : (int)grid.rows[0].size() - grid.num_codebooks + 1;
        std::vector<Frame> frames = invert_delay(grid);
        json o = json::object();
        for (auto it = j.begin(); it != j.end(); ++it)
            if (it.key() != "grid") o[it.key()] = it.value();
        o["frames"] = frames;
        output.push_back(std::move(o));
    }
    write_json_lines(out, output);
    return 0;
}

int cmd_loss(const std::string& preds_path, const std::string& targets_path,
             const std::string& config, const std::string& mask_path,
             const std::string& out_path) {
    VocabSpec spec = vocab_from_kv(parse_kv_file(config));
    auto records = read_seq_records(targets_path);
    if (records.size() != 1)
        throw std::invalid_argument("loss expects exactly one target sequence record");
    const SeqRecord& rec = records[0];
    if (!rec.schedule) throw std::invalid_argument("target record is missing its schedule");
    HybridSeq targets = interleave(rec.text, rec.frames, *rec.schedule);

    auto pred_lines = read_json_lines(preds_path);
    if (pred_lines.size() != targets.size())
        throw std::invalid_argument("prediction count " + std::to_string(pred_lines.size()) +
                                    " != sequence length " + std::to_string(targets.size()));
    std::vector<PositionPrediction> preds;
    for (size_t i = 0; i < pred_lines.size(); ++i) {
        PositionPrediction pp;
        try {
            pp.head0 = pred_lines[i].at("head0").get<std::vector<double>>();
            if (pred_lines[i].contains("heads"))
                pp.heads = pred_lines[i].at("heads").get<std::vector<std::vector<double>>>();
        } catch (const json::exception& e) {
            throw RecordParseError(i + 1, e.what());
        }
        preds.push_back(std::move(pp));
    }

    LossMask mask(targets.size(), 1);
    if (!mask_path.empty()) {
        auto lines = read_lines(mask_path);
        mask.clear();
        for (const auto& l : lines)
            if (!l.empty()) mask.push_back(l[0] == '1');
        if (mask.size() != targets.size())
            throw std::invalid_argument("mask length != sequence length");
    }

    NllResult res = hybrid_nll(preds, targets, mask, spec);
    write_report(out_path, {{"total_nll", res.total, res.scored_positions},
                            {"mean_per_token", res.mean_per_token(), res.scored_positions}});
    return 0;
}

int cmd_pack(const std::string& in, const std::string& out, size_t capacity) {
    auto records = read_seq_records(in);
    std::vector<RecordLength> lengths;
    for (size_t i = 0; i < records.size(); ++i)
        lengths.push_back({(int64_t)i, records[i].text.size() + records[i].frames.size()});
    write_pack_manifest(out, pack_sequences(lengths, capacity));
    return 0;
}

int cmd_synth_corpus(const std::string& config, const std::string& out) {
    SynthConfig cfg = synth_config_from_kv(parse_kv_file(config));
    SynthCorpus corpus = make_synth_corpus(cfg);
    std::vector<json> records;
    for (const auto& d : corpus.dialogs) {
        DialogSample s;
        s.query = d.query;
        s.voice = d.voice;
        s.text = d.response_text;
        s.frames = d.response_frames;
        records.push_back(dialog_to_json(s));
    }
    write_json_lines(out, records);
    return 0;
}

int cmd_train_toy(const std::string& config, const std::string& corpus_path,
                  const std::string& ckpt_path, const std::string& curve_path) {
    KvMap kv = parse_kv_file(config);
    ModelConfig mcfg = model_config_from_kv(kv);
    InterleaveConfig ratio{(int)kv_int(kv, "n", 4), (int)kv_int(kv, "m", 12)};

    StageConfig stage;
    std::string stage_name = kv_str(kv, "stage", "all");
    if (stage_name == "adapter")
        stage.trainable = TrainableSet::AdapterOnly;
    else if (stage_name == "adapter_backbone")
        stage.trainable = TrainableSet::AdapterAndBackbone;
    else if (stage_name == "all")
        stage.trainable = TrainableSet::All;
    else
        throw std::invalid_argument("stage must be adapter|adapter_backbone|all");
    std::string opt = kv_str(kv, "optimizer", "sgd");
    if (opt == "sgd")
        stage.optimizer = Optimizer::Sgd;
    else if (opt == "adam")
        stage.optimizer = Optimizer::Adam;
    else
        throw std::invalid_argument("optimizer must be sgd|adam");
    stage.learning_rate = kv_double(kv, "learning_rate", 0.5);
    stage.steps = (int)kv_int(kv, "steps", 1000);
    stage.batch_size = (int)kv_int(kv, "batch_size", 8);
    stage.grad_clip = kv_double(kv, "grad_clip", 0.0);
    bool inject = kv_int(kv, "inject", 1) != 0;
    int num_voices = (int)kv_int(kv, "num_voices", 2);
    uint64_t speaker_seed = (uint64_t)kv_int(kv, "speaker_seed", 1234);
    uint64_t train_seed = (uint64_t)kv_int(kv, "train_seed", 77);

    SpeakerTable table = speaker_table(speaker_seed, num_voices, mcfg.speaker_dim);

    auto lines = read_json_lines(corpus_path);
    std::vector<TrainExample> examples;
    for (size_t i = 0; i < lines.size(); ++i) {
        DialogSample d = dialog_from_json(lines[i], i + 1);
        if (d.voice < 0 || d.voice >= num_voices)
            throw std::invalid_argument("dialog " + std::to_string(i) + " names voice " +
                                        std::to_string(d.voice) + " outside the table");
        examples.push_back(build_example(d.query, table.voices[(size_t)d.voice], table.user_vec,
                                         d.text, d.frames, mcfg.vocab, ratio,
                                         (size_t)mcfg.max_seq, inject));
    }
    if (examples.empty()) throw std::invalid_argument("empty corpus");

    ToyModel model(mcfg);
    Rng rng(train_seed);
    std::vector<std::string> curve;
    for (int step = 1; step <= stage.steps; ++step) {
        std::vector<TrainExample> batch;
        for (int b = 0; b < stage.batch_size; ++b)
            batch.push_back(examples[(size_t)rng.uniform_int(0, (int)examples.size() - 1)]);
        TrainStepResult res = model.train_step(batch, stage);
        if (!res.applied) {
            std::cerr << "step " << step << ": non-finite loss, step aborted\n";
            return 1;
        }
        std::ostringstream ss;
        ss << step << " " << res.loss;
        curve.push_back(ss.str());
    }
    if (!curve_path.empty()) write_lines(curve_path, curve);

    std::map<std::string, Eigen::MatrixXd> extras;
    Eigen::MatrixXd voices((Eigen::Index)table.voices.size(), mcfg.speaker_dim);
    for (size_t v = 0; v < table.voices.size(); ++v)
        for (int i = 0; i < mcfg.speaker_dim; ++i)
            voices((Eigen::Index)v, i) = table.voices[v][(size_t)i];
    extras["voices"] = voices;
    Eigen::MatrixXd user(1, mcfg.speaker_dim);
    for (int i = 0; i < mcfg.speaker_dim; ++i) user(0, i) = table.user_vec[(size_t)i];
    extras["user_vec"] = user;
    Eigen::MatrixXd ratio_m(1, 2);
    ratio_m << ratio.n, ratio.m;
    extras["ratio"] = ratio_m;
    Eigen::MatrixXd inject_m(1, 1);
    inject_m << (inject ? 1.0 : 0.0);
    extras["inject"] = inject_m;
    model.save_checkpoint(ckpt_path, extras);
    std::cout << "final_loss " << model.batch_loss(examples) << "\n";
    return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& prompt_path,
                 const std::string& out_path, int voice_override, bool greedy, double temperature,
                 uint64_t seed, int max_text, int max_frames, int max_steps) {
    std::map<std::string, Eigen::MatrixXd> extras;
    ToyModel model = ToyModel::load_checkpoint(ckpt_path, &extras);
    const ModelConfig& mcfg = model.config();
    if (!extras.count("voices") || !extras.count("user_vec") || !extras.count("ratio"))
        throw std::invalid_argument("checkpoint lacks the voices/user_vec/ratio extras");
    InterleaveConfig ratio{(int)extras["ratio"](0, 0), (int)extras["ratio"](0, 1)};
    bool inject = !extras.count("inject") || extras["inject"](0, 0) != 0.0;

    auto lines = read_json_lines(prompt_path);
    std::vector<json> output;
    for (size_t i = 0; i < lines.size(); ++i) {
        DialogSample d = dialog_from_json(lines[i], i + 1);
        int voice = voice_override >= 0 ? voice_override : d.voice;
        if (voice < 0 || voice >= (int)extras["voices"].rows())
            throw std::invalid_argument("voice " + std::to_string(voice) + " outside the table");
        std::vector<double> agent((size_t)mcfg.speaker_dim), user((size_t)mcfg.speaker_dim);
        for (int k = 0; k < mcfg.speaker_dim; ++k) {
            agent[(size_t)k] = extras["voices"](voice, k);
            user[(size_t)k] = extras["user_vec"](0, k);
        }
        AssembledContext ctx = assemble_context({}, d.query, agent, user, mcfg.vocab,
                                                (size_t)mcfg.max_seq, inject);
        DecodeConfig decode;
        decode.greedy = greedy;
        decode.temperature = temperature;
        decode.seed = seed + i;
        GenerateResult res =
            model.generate(ctx.items, ratio, decode, GenLimits{max_text, max_frames, max_steps});

        std::vector<int32_t> y;
        std::vector<Frame> z;
        deinterleave(res.response, y, z);
        json j;
        j["text"] = y;
        j["frames"] = z;
        j["schedule"] = std::vector<int>{ratio.n, ratio.m};
        j["truncated"] = res.truncated;
        j["audio_complete"] = res.audio_complete;
        if (res.audio_complete) j["decoded_frames"] = res.frames;
        output.push_back(std::move(j));
    }
    write_json_lines(out_path, output);
    return 0;
}

int cmd_gradcheck(const std::string& config, double epsilon, int coords, uint64_t seed,
                  double tolerance) {
    KvMap kv = parse_kv_file(config);
    ModelConfig mcfg = model_config_from_kv(kv);
    SynthConfig scfg = synth_config_from_kv(kv);
    scfg.speaker_dim = mcfg.speaker_dim;
    scfg.adapter_in_dim = mcfg.adapter_in_dim;
    SynthCorpus corpus = make_synth_corpus(scfg);

    std::vector<TrainExample> batch;
    for (const auto& d : corpus.dialogs)
        batch.push_back(
            make_train_example(d, corpus, scfg.vocab, scfg.ratio, (size_t)mcfg.max_seq, true));

    ToyModel model(mcfg);
    double err = model.grad_check(batch, epsilon, coords, seed);
    std::cout << "max_rel_error " << err << "\n";
    return err <= tolerance ? 0 : 1;
}

int cmd_duplex_sim(const std::string& trace_path, const std::string& suite_path,
                   const std::string& out_path) {
    std::vector<DuplexEvent> trace = read_trace(trace_path);
    DetectorSuite suite = read_suite(suite_path);
    RunResult result = run(trace, suite);
    write_action_log(out_path, result.log);
    return 0;
}

int cmd_metrics(const std::string& kind, const std::string& ref_path, const std::string& hyp_path,
                bool normalized, bool normalize_contours, const std::string& out_path) {
    auto refs = read_json_lines(ref_path);
    auto hyps = read_json_lines(hyp_path);
    if (refs.size() != hyps.size())
        throw std::invalid_argument("ref and hyp files have different record counts");
    if (refs.empty()) throw std::invalid_argument("no records to score");

    auto get_tokens = [](const json& j, size_t line) -> std::vector<int64_t> {
        try {
            if (j.contains("tokens")) return j.at("tokens").get<std::vector<int64_t>>();
            if (j.contains("text")) {
                std::string s = j.at("text").get<std::string>();
                return std::vector<int64_t>(s.begin(), s.end());
            }
        } catch (const json::exception& e) {
            throw RecordParseError(line, e.what());
        }
        throw RecordParseError(line, "record needs 'tokens' or 'text'");
    };
    auto get_contour = [&](const json& j, size_t line) -> Contour {
        try {
            auto vals = j.at("contour").get<std::vector<double>>();
            if (normalize_contours) {
                std::vector<uint8_t> voiced(vals.size(), 1);
                if (j.contains("voiced")) voiced = j.at("voiced").get<std::vector<uint8_t>>();
                return normalize_contour(vals, voiced);
            }
            return Contour{vals};
        } catch (const json::exception& e) {
            throw RecordParseError(line, e.what());
        }
    };

    double sum = 0.0;
    for (size_t i = 0; i < refs.size(); ++i) {
        if (kind == "wer" || kind == "cer") {
            sum += wer(get_tokens(refs[i], i + 1), get_tokens(hyps[i], i + 1));
        } else if (kind == "cosine") {
            sum += cosine_similarity(refs[i].at("vec").get<std::vector<double>>(),
                                     hyps[i].at("vec").get<std::vector<double>>());
        } else if (kind == "mse") {
            sum += contour_mse(get_contour(refs[i], i + 1), get_contour(hyps[i], i + 1));
        } else if (kind == "dtw") {
            sum += dtw_distance(get_contour(refs[i], i + 1), get_contour(hyps[i], i + 1),
                                normalized);
        } else {
            throw std::invalid_argument("unknown metric kind '" + kind + "'");
        }
    }
    write_report(out_path, {{kind, sum / (double)refs.size(), refs.size()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybridlm: interleaved text/multi-codebook audio sequence toolkit"};
    app.require_subcommand(1);

    std::string in, out, config, preds, targets, mask, corpus_path, ckpt, curve, prompt, trace,
        suite, ref, hyp, kind;
    int n = 4, m = 12, voice = -1, coords = 200, max_text = 64, max_frames = 256, max_steps = 1024;
    size_t capacity = 10000;
    double temperature = 1.0, epsilon = 1e-4, tolerance = 1e-4;
    uint64_t seed = 0;
    bool greedy = false, normalized = false, normalize_contours = false;

    auto* c_inter = app.add_subcommand("interleave", "attach an n:m schedule to records");
    c_inter->add_option("--in", in)->required();
    c_inter->add_option("--out", out)->required();
    c_inter->add_option("--n", n, "text block size");
    c_inter->add_option("--m", m, "audio block size");

    auto* c_deinter = app.add_subcommand("deinterleave", "validate and strip the schedule");
    c_deinter->add_option("--in", in)->required();
    c_deinter->add_option("--out", out)->required();

    auto* c_delay = app.add_subcommand("delay", "frames -> staggered codebook grid");
    c_delay->add_option("--in", in)->required();
    c_delay->add_option("--out", out)->required();
    c_delay->add_option("--config", config, "vocab key/value file")->required();

    auto* c_undelay = app.add_subcommand("undelay", "staggered grid -> frames");
    c_undelay->add_option("--in", in)->required();
    c_undelay->add_option("--out", out)->required();
    c_undelay->add_option("--config", config)->required();

    auto* c_loss = app.add_subcommand("loss", "score predictions against one target sequence");
    c_loss->add_option("--preds", preds)->required();
    c_loss->add_option("--targets", targets)->required();
    c_loss->add_option("--config", config)->required();
    c_loss->add_option("--mask", mask, "0/1 per line; default all scored");
    c_loss->add_option("--out", out, "report path; stdout when omitted");

    auto* c_pack = app.add_subcommand("pack", "greedy first-fit sequence packing");
    c_pack->add_option("--in", in)->required();
    c_pack->add_option("--out", out)->required();
    c_pack->add_option("--capacity", capacity, "token budget per pack");

    auto* c_synth = app.add_subcommand("synth-corpus", "write a synthetic dialog corpus");
    c_synth->add_option("--config", config)->required();
    c_synth->add_option("--out", out)->required();

    auto* c_train = app.add_subcommand("train-toy", "train the toy model on a dialog corpus");
    c_train->add_option("--config", config)->required();
    c_train->add_option("--corpus", corpus_path)->required();
    c_train->add_option("--out", ckpt, "checkpoint path")->required();
    c_train->add_option("--curve", curve, "loss curve file");

    auto* c_gen = app.add_subcommand("generate", "schedule-driven hybrid generation");
    c_gen->add_option("--checkpoint", ckpt)->required();
    c_gen->add_option("--prompt", prompt, "dialog record file")->required();
    c_gen->add_option("--out", out)->required();
    c_gen->add_option("--voice", voice, "override the record's voice index");
    c_gen->add_flag("--greedy", greedy, "argmax decoding (default: temperature)");
    c_gen->add_option("--temperature", temperature);
    c_gen->add_option("--seed", seed);
    c_gen->add_option("--max-text", max_text);
    c_gen->add_option("--max-frames", max_frames);
    c_gen->add_option("--max-steps", max_steps);

    auto* c_grad = app.add_subcommand("gradcheck", "analytic vs central-difference gradients");
    c_grad->add_option("--config", config)->required();
    c_grad->add_option("--epsilon", epsilon);
    c_grad->add_option("--coords", coords);
    c_grad->add_option("--seed", seed);
    c_grad->add_option("--tolerance", tolerance);

    auto* c_duplex = app.add_subcommand("duplex-sim", "fold a trace through the duplex machine");
    c_duplex->add_option("--trace", trace)->required();
    c_duplex->add_option("--suite", suite, "detector stub tables (JSON)")->required();
    c_duplex->add_option("--out", out)->required();

    auto* c_metrics = app.add_subcommand("metrics", "wer|cer|cosine|mse|dtw over paired records");
    c_metrics->add_option("--kind", kind)->required();
    c_metrics->add_option("--ref", ref)->required();
    c_metrics->add_option("--hyp", hyp)->required();
    c_metrics->add_flag("--normalized", normalized, "path-normalized DTW");
    c_metrics->add_flag("--normalize-contours", normalize_contours);
    c_metrics->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(c_inter)) return cmd_interleave(in, out, n, m);
        if (app.got_subcommand(c_deinter)) return cmd_deinterleave(in, out);
        if (app.got_subcommand(c_delay)) return cmd_delay(in, out, config);
        if (app.got_subcommand(c_undelay)) return cmd_undelay(in, out, config);
        if (app.got_subcommand(c_loss)) return cmd_loss(preds, targets, config, mask, out);
        if (app.got_subcommand(c_pack)) return cmd_pack(in, out, capacity);
        if (app.got_subcommand(c_synth)) return cmd_synth_corpus(config, out);
        if (app.got_subcommand(c_train)) return cmd_train_toy(config, corpus_path, ckpt, curve);
        if (app.got_subcommand(c_gen))
            return cmd_generate(ckpt, prompt, out, voice, greedy, temperature, seed, max_text,
                                max_frames, max_steps);
        if (app.got_subcommand(c_grad))
            return cmd_gradcheck(config, epsilon, coords, seed, tolerance);
        if (app.got_subcommand(c_duplex)) return cmd_duplex_sim(trace, suite, out);
        if (app.got_subcommand(c_metrics))
            return cmd_metrics(kind, ref, hyp, normalized, normalize_contours, out);
    } catch (const RecordParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::runtime_error& e) {
        // file-system level failures land here
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
