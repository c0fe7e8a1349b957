// coips: command-line front end for synthesis, training, assessment,
// segmentation, quantification and evaluation.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "coips/pipeline/config.hpp"
#include "coips/pipeline/run.hpp"

namespace fs = std::filesystem;
using namespace coips;
using pipeline::Command;
using pipeline::PipelineConfig;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string manifest, input_dir, output_dir, split, classifier, segmenter, report;
    std::optional<std::size_t> threads;
    std::optional<double> field_mm;
    std::optional<std::size_t> per_class;
    std::optional<std::size_t> epochs;
    bool print_config = false;
};

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("-c,--config", o.config, "JSON configuration file");
    sub->add_option("--seed", o.seed, "Seed for every random stream");
    sub->add_option("-o,--output-dir", o.output_dir, "Output directory");
    sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
    sub->add_flag("--print-config", o.print_config, "Print the effective configuration and exit");
}

void add_inputs(CLI::App* sub, Overrides& o) {
    sub->add_option("-m,--manifest", o.manifest, "Manifest CSV");
    sub->add_option("-i,--input-dir", o.input_dir, "Directory of input images");
    sub->add_option("--split", o.split, "Manifest split to process");
    sub->add_option("--field-mm", o.field_mm, "Field of view per side in mm");
}

PipelineConfig resolve(const Overrides& o) {
    PipelineConfig c = o.config.empty() ? PipelineConfig{} : pipeline::load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.manifest.empty()) c.manifest = o.manifest;
    if (!o.input_dir.empty()) c.input_dir = o.input_dir;
    if (!o.output_dir.empty()) c.output_dir = o.output_dir;
    if (!o.split.empty()) c.split = o.split;
    if (!o.classifier.empty()) c.classifier_checkpoint = o.classifier;
    if (!o.segmenter.empty()) c.segmenter_checkpoint = o.segmenter;
    if (!o.report.empty()) c.eval.report = o.report;
    if (o.threads) c.threads = *o.threads;
    if (o.field_mm) c.field_mm = *o.field_mm;
    if (o.per_class) c.synth.counts = {*o.per_class, *o.per_class, *o.per_class};
    if (o.epochs) c.train_qa.max_epochs = c.train_seg.max_epochs = *o.epochs;
    c.propagate();
    pipeline::validate(c);
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int report_outcome(const pipeline::RunOutcome& out, const PipelineConfig& cfg) {
    std::size_t segmented = 0;
    for (const auto& r : out.records) segmented += r.segmented;
    std::cout << out.records.size() << " images, " << segmented << " segmented, " << out.failed << " failed -> "
              << cfg.output_dir << "\n";
    for (const auto& r : out.records)
        if (r.failed()) std::cerr << "failed: " << r.source_id << ": " << r.error << "\n";
    return out.exit_code();
}

int run(Command cmd, const Overrides& o) {
    const PipelineConfig cfg = resolve(o);
    if (o.print_config) {
        std::cout << pipeline::emit_config(cfg);
        return pipeline::kExitSuccess;
    }
    pipeline::validate_for(cfg, cmd);
    const fs::path out_dir(cfg.output_dir);
    const auto t0 = std::chrono::steady_clock::now();
    switch (cmd) {
        case Command::Synth: {
            const auto m = synth::generate_corpus(cfg.synth, out_dir);
            std::cout << "wrote " << m.rows.size() << " images to " << out_dir.string() << "\n";
            return pipeline::kExitSuccess;
        }
        case Command::Split: {
            const auto m = load_manifest(cfg.manifest, cfg.field_mm);
            std::vector<std::string> ids;
            for (const auto& r : m.rows) ids.push_back(r.source_id);
            const auto split = pipeline::split_dataset(ids, cfg.partition.to_scheme(), cfg.seed);
            std::string text = "source_id,group,index\n";
            for (std::size_t i = 0; i < split.ids.size(); ++i)
                text += split.ids[i] + "," + split.groups[i] + "," + std::to_string(split.fold[i]) + "\n";
            imaging::write_file(out_dir / "split.csv", text);
            for (const auto& [g, n] : split.sizes()) std::cout << g << ": " << n << "\n";
            return pipeline::kExitSuccess;
        }
        case Command::TrainQa: {
            const auto m = load_manifest(cfg.manifest, cfg.field_mm);
            const auto res = qa::train_classifier(m, cfg.train_qa);
            tensor::save_checkpoint(res.best, out_dir / "classifier.ckpt");
            imaging::write_file(out_dir / "train_qa_log.csv", res.log_csv());
            const auto& best = res.log.at(res.best_epoch);
            nlohmann::json summary{{"best_epoch", res.best_epoch},
                                   {"best_val_loss", res.best_val_loss},
                                   {"val_accuracy", best.val_acc},
                                   {"class_weights", res.weights.weights},
                                   {"seconds", seconds_since(t0)}};
            imaging::write_file(out_dir / "train_qa.json", summary.dump(2) + "\n");
            std::cout << "best epoch " << res.best_epoch << ": val loss " << res.best_val_loss << ", val accuracy "
                      << best.val_acc << "\n";
            return pipeline::kExitSuccess;
        }
        case Command::TrainSeg: {
            const auto m = load_manifest(cfg.manifest, cfg.field_mm);
            auto tcfg = cfg.train_seg;
            tcfg.threads = resolve_threads(tcfg.threads);
            const auto res = seg::train_segmenter(m, tcfg);
            tensor::save_checkpoint(res.best(), out_dir / "segmenter.ckpt");
            imaging::write_file(out_dir / "train_seg_log.csv", res.log_csv());
            nlohmann::json folds = nlohmann::json::array();
            for (const auto& f : res.folds) folds.push_back({{"fold", f.fold}, {"best_dice", f.best_dice}, {"best_epoch", f.best_epoch}});
            nlohmann::json summary{{"best_fold", res.best_fold}, {"best_dice", res.best_dice()}, {"folds", folds},
                                   {"seconds", seconds_since(t0)}};
            imaging::write_file(out_dir / "train_seg.json", summary.dump(2) + "\n");
            std::cout << "best fold " << res.best_fold << ": val Dice " << res.best_dice() << "\n";
            return pipeline::kExitSuccess;
        }
        case Command::Assess: {
            const auto out = pipeline::run_assess(cfg);
            std::size_t counts[3] = {0, 0, 0};
            for (const auto& r : out.records)
                if (!r.failed()) ++counts[static_cast<int>(r.category)];
            std::cout << "ungradable " << counts[0] << ", gradable " << counts[1] << ", outstanding " << counts[2]
                      << ", failed " << out.failed << "\n";
            return out.exit_code();
        }
        case Command::Segment:
            return report_outcome(pipeline::run_segment(cfg), cfg);
        case Command::Pipeline:
            return report_outcome(pipeline::run_pipeline(cfg), cfg);
        case Command::Quantify: {
            const auto [rows, code] = pipeline::run_quantify(cfg);
            for (const auto& r : rows)
                if (!r.error.empty()) std::cerr << "failed: " << r.source_id << ": " << r.error << "\n";
            std::cout << rows.size() << " masks quantified -> " << (out_dir / "quantify.csv").string() << "\n";
            return code;
        }
        case Command::Eval: {
            const auto m = pipeline::run_eval(cfg);
            std::cout << m.dump(2) << "\n";
            return pipeline::kExitSuccess;
        }
    }
    return pipeline::kExitFatal;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OCTA image quality assessment and FAZ quantification"};
    app.require_subcommand(1);
    Overrides o;
    Command cmd = Command::Pipeline;

    auto add = [&](const char* name, const char* help, Command c) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_common(sub, o);
        sub->callback([&cmd, c] { cmd = c; });
        return sub;
    };

    auto* synth = add("synth", "Generate a synthetic labelled corpus", Command::Synth);
    synth->add_option("--per-class", o.per_class, "Images per quality class");

    auto* split = add("split", "Partition a manifest into hold-out parts or k folds", Command::Split);
    split->add_option("-m,--manifest", o.manifest, "Manifest CSV");

    auto* train_qa = add("train-qa", "Train the quality classifier", Command::TrainQa);
    train_qa->add_option("-m,--manifest", o.manifest, "Manifest CSV");
    train_qa->add_option("--epochs", o.epochs, "Maximum epochs");

    auto* train_seg = add("train-seg", "Train the FAZ segmenter with k-fold cross-validation", Command::TrainSeg);
    train_seg->add_option("-m,--manifest", o.manifest, "Manifest CSV");
    train_seg->add_option("--epochs", o.epochs, "Maximum epochs per fold");

    auto* assess = add("assess", "Classify image quality", Command::Assess);
    add_inputs(assess, o);
    assess->add_option("--classifier", o.classifier, "Classifier checkpoint");

    auto* segment = add("segment", "Segment and quantify images assessed by a previous run", Command::Segment);
    add_inputs(segment, o);
    segment->add_option("--segmenter", o.segmenter, "Segmenter checkpoint");

    auto* quantify = add("quantify", "FAZ area of existing masks", Command::Quantify);
    add_inputs(quantify, o);

    auto* pipe = add("pipeline", "Assess, segment, quantify and report", Command::Pipeline);
    add_inputs(pipe, o);
    pipe->add_option("--classifier", o.classifier, "Classifier checkpoint");
    pipe->add_option("--segmenter", o.segmenter, "Segmenter checkpoint");

    auto* eval = add("eval", "Score a report against manifest ground truth", Command::Eval);
    eval->add_option("-m,--manifest", o.manifest, "Ground-truth manifest CSV");
    eval->add_option("--split", o.split, "Manifest split to score");
    eval->add_option("-r,--report", o.report, "report.json to score");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return pipeline::kExitFatal;
    }

    try {
        return run(cmd, o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::kExitFatal;
    }
}
