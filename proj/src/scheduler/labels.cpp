#include "bigthick/scheduler/labels.hpp"

#include "bigthick/error.hpp"

namespace bigthick::scheduler {

bool is_busy_activity(const std::string& activity) {
  return activity == "study_alone" || activity == "study_group" || activity == "lecture";
}

int encode_label(const context::Vocabulary& vocabulary, const std::string& activity) {
  if (!vocabulary.has_activity(activity)) {
    throw Error(ErrorCode::Vocabulary, "unknown activity '" + activity + "'");
  }
  return is_busy_activity(activity) ? 1 : 0;
}

}  // namespace bigthick::scheduler
