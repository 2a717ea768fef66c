// Trainer-protocol executable backed by the scripted simulation.
// Usage: remedi-scripted-trainer <manifest>   (cwd = run directory)

#include <cstdio>
#include <exception>
#include <filesystem>

#include "remedi/error.hpp"
#include "remedi/scripted.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <manifest.json>\n", argv[0]);
    return 2;
  }
  try {
    const auto ref = remedi::scripted::run_scripted_trainer(std::filesystem::current_path(), argv[1]);
    std::printf("trained %s\n", ref.c_str());
    return 0;
  } catch (const remedi::ProtocolError& e) {
    std::fprintf(stderr, "protocol error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
