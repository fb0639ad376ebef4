// Writes the deterministic synthetic keyword-matching corpus used by the
// desk-scale experiments: corpus.jsonl, embeddings.txt, and split.json.

#include <cstdio>

#include <CLI11.hpp>

#include "fosm/cli/commands.hpp"
#include "fosm/corpus/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate the synthetic keyword-matching corpus"};
    std::string out_dir;
    fosm::ToyCorpusSpec spec;
    app.add_option("out", out_dir, "output directory")->required();
    app.add_option("--classes", spec.n_classes, "number of classes");
    app.add_option("--per-class", spec.instances_per_class, "instances per class");
    app.add_option("--embed-dim", spec.embed_dim, "embedding dimension");
    app.add_option("--seed", spec.seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    return fosm::cli::run_guarded([&] {
        auto paths = fosm::generate_toy_corpus(spec, out_dir);
        std::printf("wrote %s\n      %s\n      %s\n", paths.corpus.c_str(),
                    paths.embeddings.c_str(), paths.split.c_str());
    });
}
