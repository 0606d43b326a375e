// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <steward/maestro/task_record.hpp>
#include <steward/state/timeline_event.hpp>

#include <vector>

namespace steward::state
{

/// Folds one event into the record. This is the only way a TaskRecord
/// changes, live or replayed. Throws StateError(CorruptTimeline) when the
/// event's seq is not last_seq + 1 or the event is illegal in the record's
/// current status; the record is left untouched in that case.
void apply_event(maestro::TaskRecord& record, const TimelineEvent& event);

/// Folds events onto the empty pre-creation record.
[[nodiscard]] auto replay(const std::vector<TimelineEvent>& events) -> maestro::TaskRecord;

/// Folds the events after `base.last_seq` onto a snapshot.
[[nodiscard]] auto replay_from(maestro::TaskRecord base, const std::vector<TimelineEvent>& events)
    -> maestro::TaskRecord;

} // namespace steward::state
