use mhte_core::bench::{default_identity, synthetic_suite, DEFAULT_IDENTITY};
use mhte_core::ids::{AppId, ArtifactId, TaskId};
use mhte_core::memory::MemoryKind;
use mhte_core::planning::parse_identity;
use mhte_core::runtime::{run_day, Agent, HaltReason, PolicyKind, RuntimeConfig, Session};
use mhte_core::task::{build_graph, EditStep, TaskSpec, TaskState};

fn task(id: &str, app: &str, keys: &[&str]) -> TaskSpec {
    TaskSpec {
        task_id: TaskId::new(id),
        app_id: AppId::new(app),
        description: format!("prepare {id} deliverable"),
        priority: 1,
        state_footprint: 50,
        step_count: keys.len() as u32,
        deadline: None,
        deliverable_id: ArtifactId::new(format!("doc-{id}")),
        edit_script: keys.iter().map(|k| EditStep::new(*k, format!("{id} {k}"))).collect(),
    }
}

fn session(tasks: Vec<TaskSpec>, edges: &[(&str, &str)]) -> Session {
    let edges: Vec<(TaskId, TaskId)> = edges.iter().map(|(a, b)| (TaskId::new(*a), TaskId::new(*b))).collect();
    let graph = build_graph(&tasks, &edges).unwrap();
    Session::new(tasks, graph)
}

fn keys(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("k{k}")).collect()
}

fn ten_step() -> Session {
    let k = keys(10);
    let refs: Vec<&str> = k.iter().map(String::as_str).collect();
    session(vec![task("A1", "excel", &refs)], &[])
}

#[test]
fn identical_seeds_give_identical_days() {
    let (id, tpl) = default_identity();
    let s = Session::from_suite(&synthetic_suite()).unwrap();
    for p in [PolicyKind::FlatBaseline, PolicyKind::ExpLearning] {
        let a = run_day(&id, &tpl, &s, &RuntimeConfig::new(p), 9).unwrap();
        let b = run_day(&id, &tpl, &s, &RuntimeConfig::new(p), 9).unwrap();
        assert_eq!(a.render(), b.render());
    }
}

#[test]
fn schedule_jitter_stays_within_ten_minutes() {
    let (id, tpl) = default_identity();
    let mut starts = std::collections::BTreeSet::new();
    for seed in 0..200 {
        let mut agent = Agent::new(id.clone(), tpl.clone(), ten_step(), RuntimeConfig::new(PolicyKind::Scripted), seed).unwrap();
        agent.start_day(0).unwrap();
        let (s, e) = agent.schedule();
        assert!((470..=490).contains(&s.minutes()), "{s}");
        assert!((1070..=1090).contains(&e.minutes()), "{e}");
        starts.insert(s.minutes());
    }
    assert!(starts.len() > 10);
}

#[test]
fn cycles_start_at_least_five_minutes_apart() {
    let (id, tpl) = default_identity();
    let tasks = vec![task("A1", "excel", &["a"]), task("A2", "excel", &["b"]), task("A3", "word", &["c"])];
    for p in [PolicyKind::Scripted, PolicyKind::CognitiveModel] {
        let mut agent = Agent::new(id.clone(), tpl.clone(), session(tasks.clone(), &[]), RuntimeConfig::new(p), 1).unwrap();
        agent.start_day(0).unwrap();
        let mut starts = Vec::new();
        while agent.halt().is_none() {
            let r = agent.run_cycle().unwrap();
            if r.halted.is_none() {
                starts.push(r.started_at);
            }
        }
        assert!(starts.len() >= 3);
        for w in starts.windows(2) {
            assert!(w[1] - w[0] >= 5, "{p}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn ten_step_task_costs_its_edits_plus_fixed_overhead() {
    let (id, tpl) = default_identity();
    // Scripted: one open plus ten edits, one minute each.
    let r = run_day(&id, &tpl, &ten_step(), &RuntimeConfig::new(PolicyKind::Scripted), 3).unwrap();
    assert_eq!(r.judged(), 1);
    assert_eq!(r.halt, HaltReason::AllTerminal);
    assert_eq!(r.counters.action_steps, 11);
    assert_eq!(r.minutes_used, 11);
    // Orchestrated: plus one reprioritization step and three probes.
    let r = run_day(&id, &tpl, &ten_step(), &RuntimeConfig::new(PolicyKind::ExpLearning), 3).unwrap();
    assert_eq!(r.judged(), 1);
    assert_eq!(r.counters.action_steps, 11);
    assert_eq!(r.counters.probe_steps, 3);
    assert_eq!(r.counters.reprioritize_steps, 1);
    assert_eq!(r.minutes_used, 11 + 3 + 1);
}

#[test]
fn flat_context_misroutes_shared_key() {
    let (id, tpl) = default_identity();
    let s = || session(vec![task("A1", "word", &["title", "body"]), task("A2", "word", &["title", "intro"])], &[]);
    let flat = run_day(&id, &tpl, &s(), &RuntimeConfig::new(PolicyKind::FlatBaseline), 1).unwrap();
    // A2 was loaded last, so A1's title edit lands in A2's document.
    assert!(flat.counters.interference_writes >= 1);
    let a1 = flat.tasks.iter().find(|t| t.task_id.as_str() == "A1").unwrap();
    assert!(!a1.judged);
    let scripted = run_day(&id, &tpl, &s(), &RuntimeConfig::new(PolicyKind::Scripted), 1).unwrap();
    assert_eq!(scripted.judged(), 2);
    assert_eq!(scripted.counters.interference_writes, 0);
}

#[test]
fn idle_cycle_stores_a_summary() {
    let (id, tpl) = default_identity();
    let mut agent = Agent::new(id, tpl, ten_step(), RuntimeConfig::new(PolicyKind::CognitiveModel), 1).unwrap();
    agent.start_day(0).unwrap();
    let app = AppId::new("excel");
    agent.workspace_mut().app_mut(&app).remove_artifact(&ArtifactId::new("doc-A1"));
    let r = agent.run_cycle().unwrap();
    assert_eq!(r.worked, None);
    assert_eq!(agent.statuses()[&TaskId::new("A1")].state(), TaskState::Blocked);
    assert_eq!(agent.counters().idle_cycles, 1);
    assert!(agent
        .memory()
        .records()
        .any(|m| m.kind() == MemoryKind::ActionSummary && m.content.contains("idle")));
}

#[test]
fn tasks_outside_the_toolset_are_never_acted_on() {
    let text = DEFAULT_IDENTITY.replacen("\ttool=ppt", "", 1);
    let (id, tpl) = parse_identity(&text).unwrap();
    let s = session(vec![task("A1", "ppt", &["s1", "s2"]), task("A2", "excel", &["c1"])], &[]);
    let r = run_day(&id, &tpl, &s, &RuntimeConfig::new(PolicyKind::CognitiveTools), 2).unwrap();
    let ppt = r.tasks.iter().find(|t| t.task_id.as_str() == "A1").unwrap();
    assert_eq!(ppt.state, TaskState::Skipped);
    assert_eq!(ppt.attempts, 3);
    let agent_acted_on_ppt = {
        let mut a = Agent::new(id, tpl, s, RuntimeConfig::new(PolicyKind::CognitiveTools), 2).unwrap();
        a.start_day(0).unwrap();
        while a.halt().is_none() {
            a.run_cycle().unwrap();
        }
        a.action_log().iter().any(|x| x.task_id.as_str() == "A1")
    };
    assert!(!agent_acted_on_ppt);
    assert!(r.tasks.iter().find(|t| t.task_id.as_str() == "A2").unwrap().judged);
}

#[test]
fn prerequisites_finish_before_dependents_start() {
    let (id, tpl) = default_identity();
    let s = session(
        vec![task("B", "excel", &["x"]), task("A", "excel", &["y"]), task("C", "word", &["z"])],
        &[("A", "B"), ("C", "A")],
    );
    for p in PolicyKind::LADDER.into_iter().chain([PolicyKind::Scripted]) {
        let mut a = Agent::new(id.clone(), tpl.clone(), s.clone(), RuntimeConfig::new(p), 4).unwrap();
        a.start_day(0).unwrap();
        while a.halt().is_none() {
            a.run_cycle().unwrap();
        }
        let first = |t: &str| a.action_log().iter().position(|x| x.task_id.as_str() == t);
        let last = |t: &str| a.action_log().iter().rposition(|x| x.task_id.as_str() == t);
        assert!(last("B") < first("A") && last("A") < first("C"), "{p}");
        assert_eq!(a.report().judged(), 3, "{p}");
    }
}

#[test]
fn day_end_is_reached_with_a_tiny_budget() {
    let (id, tpl) = default_identity();
    let mut cfg = RuntimeConfig::new(PolicyKind::ExpLearning);
    cfg.max_minutes = 8;
    let r = run_day(&id, &tpl, &ten_step(), &cfg, 1).unwrap();
    assert_eq!(r.halt, HaltReason::DurationCap);
    assert!(r.minutes_used <= 8);
    assert!(r.tasks.iter().all(|t| t.state != TaskState::InProgress));
    let mut cfg = RuntimeConfig::new(PolicyKind::ExpLearning);
    cfg.max_tool_calls = 4;
    let r = run_day(&id, &tpl, &ten_step(), &cfg, 1).unwrap();
    assert_eq!(r.halt, HaltReason::ToolCallCap);
    assert!(r.tool_calls <= 4);
}
