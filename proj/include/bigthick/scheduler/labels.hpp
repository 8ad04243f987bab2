#pragma once

#include <string>

#include "bigthick/context/vocabulary.hpp"

namespace bigthick::scheduler {

/// Busy label: 1 for study_alone, study_group and lecture, 0 for any other
/// activity. Throws Error(Vocabulary) for terms outside the vocabulary.
int encode_label(const context::Vocabulary& vocabulary, const std::string& activity);

bool is_busy_activity(const std::string& activity);

}  // namespace bigthick::scheduler
