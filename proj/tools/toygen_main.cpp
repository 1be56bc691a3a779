#include "disco/errors.hpp"
#include "disco/jsonl.hpp"
#include "disco/toysuite.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <string>

// Regenerates the deterministic toy evaluation suite (knowledge base, analyzer
// rules, and replay cassettes) from the checked-in prompt templates. The
// output is byte-stable, so re-running over an up-to-date tree is a no-op.
int main(int argc, char** argv) {
  CLI::App app{"Regenerate the toy end-to-end fixture suite"};
  std::string templates_dir = "fixtures/templates";
  std::string output_dir = "fixtures";
  app.add_option("--templates", templates_dir,
                 "Directory holding generation_prompt.txt and refine_prompt.txt");
  app.add_option("--output", output_dir, "Fixture directory to write under");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto templates = std::filesystem::path(templates_dir);
    const std::string generation_template =
        disco::read_text_file(templates / "generation_prompt.txt");
    const std::string refine_template =
        disco::read_text_file(templates / "refine_prompt.txt");
    disco::toy::write_suite(output_dir, generation_template, refine_template);
    const auto files = disco::toy::suite_files(output_dir);
    fmt::print("wrote toy suite under {}:\n", output_dir);
    for (const auto& path :
         {files.kb, files.packages, files.rules, files.generation_cassette,
          files.refinement_cassette, files.demo_generations, files.demo_cassette}) {
      fmt::print("  {}\n", path.string());
    }
  } catch (const disco::Error& e) {
    fmt::print(stderr, "toygen: {}: {}\n", to_string(e.kind()), e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "toygen: {}\n", e.what());
    return 2;
  }
  return 0;
}
