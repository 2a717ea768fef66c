#pragma once

#include <cstdint>
#include <vector>

#include "remedi/corpus.hpp"

namespace remedi {

/// Seeded pseudo-EHR corpus. Every context contains its query id, so contexts
/// are unique across corpora built with different `id_prefix`es.
/// `class_weights` empty means uniform labels.
Corpus synthetic_corpus(TaskKind task, std::size_t n, std::uint64_t seed,
                        std::vector<double> class_weights = {},
                        std::string_view id_prefix = "q");

}  // namespace remedi
