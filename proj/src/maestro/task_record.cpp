// SPDX-License-Identifier: Apache-2.0
#include <steward/maestro/task_record.hpp>

#include <array>
#include <utility>

namespace steward::maestro
{

using nlohmann::json;

namespace
{

constexpr auto kStatusNames = std::array {
    std::pair { TaskStatus::Created, std::string_view("Created") },
    std::pair { TaskStatus::Bootstrapping, std::string_view("Bootstrapping") },
    std::pair { TaskStatus::AwaitingModel, std::string_view("AwaitingModel") },
    std::pair { TaskStatus::AwaitingApproval, std::string_view("AwaitingApproval") },
    std::pair { TaskStatus::AwaitingToolResult, std::string_view("AwaitingToolResult") },
    std::pair { TaskStatus::AwaitingPlanDecision, std::string_view("AwaitingPlanDecision") },
    std::pair { TaskStatus::Completed, std::string_view("Completed") },
    std::pair { TaskStatus::Failed, std::string_view("Failed") },
    std::pair { TaskStatus::Cancelled, std::string_view("Cancelled") },
};

auto plan_to_json(const Plan& plan) -> json
{
    return json {
        { "steps", plan.steps },
        { "decision", to_string(plan.decision) },
        { "modified_steps", plan.modified_steps },
    };
}

auto plan_from_json(const json& j) -> Plan
{
    auto plan = Plan {};
    plan.steps = j.at("steps").get<std::vector<std::string>>();
    auto const decision = j.at("decision").get<std::string>();
    plan.decision = decision == "approved"   ? PlanDecisionKind::Approved
                    : decision == "rejected" ? PlanDecisionKind::Rejected
                    : decision == "modified" ? PlanDecisionKind::Modified
                                             : PlanDecisionKind::Pending;
    plan.modified_steps = j.at("modified_steps").get<std::vector<std::string>>();
    return plan;
}

auto pending_to_json(const PendingInvocation& p) -> json
{
    auto j = json {
        { "invocation_id", p.invocation_id },
        { "call", protocol::to_json(p.call) },
        { "audit", p.audit },
    };
    if (p.expected_hash)
        j["expected_hash"] = *p.expected_hash;
    if (p.approved)
        j["approved"] = true;
    return j;
}

auto pending_from_json(const json& j) -> PendingInvocation
{
    auto p = PendingInvocation {};
    p.invocation_id = j.at("invocation_id").get<std::string>();
    p.call = protocol::tool_call_from_json(j.at("call"));
    p.audit = j.at("audit").get<std::vector<std::string>>();
    if (auto it = j.find("expected_hash"); it != j.end())
        p.expected_hash = it->get<std::string>();
    p.approved = j.value("approved", false);
    return p;
}

template <typename T, typename F>
void put_optional(json& j, const char* key, const std::optional<T>& value, F&& convert)
{
    j[key] = value ? convert(*value) : json(nullptr);
}

template <typename T, typename F>
auto get_optional(const json& j, const char* key, F&& convert) -> std::optional<T>
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        return std::nullopt;
    return convert(*it);
}

} // namespace

auto to_string(TaskStatus status) -> std::string_view
{
    for (auto const& [value, name]: kStatusNames)
        if (value == status)
            return name;
    return "?";
}

auto parse_task_status(std::string_view text) -> std::optional<TaskStatus>
{
    for (auto const& [value, name]: kStatusNames)
        if (name == text)
            return value;
    return std::nullopt;
}

auto is_terminal(TaskStatus status) -> bool
{
    return status == TaskStatus::Completed || status == TaskStatus::Failed || status == TaskStatus::Cancelled;
}

auto to_string(PlanDecisionKind kind) -> std::string_view
{
    switch (kind)
    {
        case PlanDecisionKind::Pending: return "pending";
        case PlanDecisionKind::Approved: return "approved";
        case PlanDecisionKind::Rejected: return "rejected";
        case PlanDecisionKind::Modified: return "modified";
    }
    return "?";
}

auto to_json(const TaskRecord& r) -> json
{
    auto history = json::array();
    for (auto const& entry: r.history)
        history.push_back(model::to_json(entry));

    auto j = json {
        { "task_id", r.task_id },
        { "status", to_string(r.status) },
        { "mode", safety::to_string(r.mode) },
        { "planning", r.planning },
        { "effort", model::to_string(r.effort) },
        { "policy_name", r.policy_name },
        { "history", std::move(history) },
        { "read_set", r.read_set },
        { "iteration_count", r.iteration_count },
        { "last_seq", r.last_seq },
    };
    auto const identity = [](const std::string& s) { return json(s); };
    put_optional(j, "bootstrap", r.bootstrap, [](const auto& m) { return protocol::to_json(m); });
    put_optional(j, "pending_invocation", r.pending_invocation, pending_to_json);
    put_optional(j, "unrouted_call", r.unrouted_call, pending_to_json);
    put_optional(j, "proposed_plan", r.proposed_plan, plan_to_json);
    put_optional(j, "accepted_plan", r.accepted_plan, plan_to_json);
    put_optional(j, "final_text", r.final_text, identity);
    put_optional(j, "failure_reason", r.failure_reason, identity);
    return j;
}

auto task_record_from_json(const json& j) -> TaskRecord
{
    auto r = TaskRecord {};
    r.task_id = j.at("task_id").get<std::string>();
    r.status = parse_task_status(j.at("status").get<std::string>()).value_or(TaskStatus::Created);
    r.mode = safety::parse_execution_mode(j.at("mode").get<std::string>()).value_or(safety::ExecutionMode::Approval);
    r.planning = j.at("planning").get<bool>();
    r.effort = model::parse_thinking_effort(j.at("effort").get<std::string>()).value_or(model::ThinkingEffort::Medium);
    r.policy_name = j.value("policy_name", std::string {});
    for (auto const& entry: j.at("history"))
        r.history.push_back(model::history_entry_from_json(entry));
    r.read_set = j.at("read_set").get<std::map<std::string, std::string>>();
    r.iteration_count = j.at("iteration_count").get<int>();
    r.last_seq = j.at("last_seq").get<std::uint64_t>();

    auto const text = [](const json& v) { return v.get<std::string>(); };
    r.bootstrap = get_optional<protocol::BootstrapMetadata>(j, "bootstrap", protocol::bootstrap_metadata_from_json);
    r.pending_invocation = get_optional<PendingInvocation>(j, "pending_invocation", pending_from_json);
    r.unrouted_call = get_optional<PendingInvocation>(j, "unrouted_call", pending_from_json);
    r.proposed_plan = get_optional<Plan>(j, "proposed_plan", plan_from_json);
    r.accepted_plan = get_optional<Plan>(j, "accepted_plan", plan_from_json);
    r.final_text = get_optional<std::string>(j, "final_text", text);
    r.failure_reason = get_optional<std::string>(j, "failure_reason", text);
    return r;
}

auto observable_state(const TaskRecord& record) -> ObservableState
{
    return ObservableState {
        .status = record.status,
        .history_length = record.history.size(),
        .read_set = record.read_set,
        .final_text = record.final_text,
    };
}

} // namespace steward::maestro
