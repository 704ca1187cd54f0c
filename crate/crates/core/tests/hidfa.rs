use std::collections::BTreeSet;

use homeostasis::check::divergences;
use homeostasis::hidfa::{CopyProp, Idfa, Liveness, PointsTo, Problem, ReachingDefs};
use homeostasis::ir::{KindTag, NodeId, Program, Slot};
use homeostasis::{register_analyses, Action, Homeostasis, Mode};

fn setup(src: &str, mode: Mode) -> Homeostasis {
    let mut hs = Homeostasis::new(Program::parse(src).unwrap(), mode);
    register_analyses(&mut hs, &["pta", "rd", "lv", "cp"]).unwrap();
    hs
}

fn find(hs: &Homeostasis, text: &str) -> NodeId {
    hs.program()
        .attached_nodes()
        .into_iter()
        .filter(|n| !matches!(hs.program().kind(*n).tag(), KindTag::Entry | KindTag::Exit))
        .find(|n| hs.program().print_node(*n).trim() == text)
        .unwrap_or_else(|| panic!("no statement `{text}`"))
}

fn remove(hs: &mut Homeostasis, text: &str) {
    let n = find(hs, text);
    let (host, _, i) = hs.program().position(n).unwrap();
    hs.transform(host, Slot::Stmts, Action::RemoveAt(i.unwrap()), None).unwrap();
}

fn insert_before(hs: &mut Homeostasis, anchor: &str, text: &str) {
    let n = find(hs, anchor);
    let (host, _, i) = hs.program().position(n).unwrap();
    let func = hs.program().function_of(n).unwrap().to_string();
    let s = hs.build_stmts(&func, text).unwrap()[0];
    hs.transform(host, Slot::Stmts, Action::InsertAt(i.unwrap()), Some(s)).unwrap();
}

/// Applies `edit` under incremental update and checks every analysis
/// against a from-scratch run, and that no update fell back to a rerun.
fn assert_equivalent(src: &str, edit: impl FnOnce(&mut Homeostasis)) {
    let mut hs = setup(src, Mode::LzUpd);
    edit(&mut hs);
    let d = divergences(&mut hs).unwrap();
    assert!(d.is_empty(), "{d:?}\n{}", hs.program().print());
    for (name, m) in hs.metrics() {
        assert_eq!(m.fallback_computes, 0, "{name}");
        assert_eq!(m.compute_calls, 0, "{name}");
    }
    assert!(hs.metrics()["rd"].handle_update_calls >= 1);
}

#[test]
fn loop_def_removed_shrinks_back_edge_facts() {
    assert_equivalent(
        "func main(){ x = 1; while (c < 3) { y = x; x = 2; c = c + 1; } }",
        |hs| remove(hs, "x = 2;"),
    );
}

#[test]
fn loop_pointer_retarget_removed() {
    assert_equivalent(
        "func main(){ shared a; shared b; p0 = &a; while (c < 3) { q = p0; p0 = &b; c = c + 1; } *p0 = 1; }",
        |hs| remove(hs, "p0 = &b;"),
    );
}

#[test]
fn loop_copy_becomes_available() {
    assert_equivalent(
        "func main(){ y = x; while (c < 3) { z = y; y = w; c = c + 1; } }",
        |hs| remove(hs, "y = w;"),
    );
}

#[test]
fn nested_loop_inner_def_removed() {
    assert_equivalent(
        "func main(){ while (i < 2) { while (j < 2) { x = j; j = j + 1; } y = x; i = i + 1; } }",
        |hs| remove(hs, "x = j;"),
    );
}

#[test]
fn loop_through_barrier_in_region() {
    assert_equivalent(
        "func main(){ shared s; shared t; parallel { while (c < 2) { s = t; barrier; t = s; c = c + 1; } } }",
        |hs| remove(hs, "t = s;"),
    );
}

#[test]
fn backward_loop_use_removed() {
    assert_equivalent(
        "func main(){ while (c < 3) { x = y; y = 1; c = c + 1; } z = x; }",
        |hs| remove(hs, "x = y;"),
    );
}

#[test]
fn loop_def_inserted_then_removed() {
    assert_equivalent("func main(){ x = 1; while (c < 3) { y = x; c = c + 1; } }", |hs| {
        insert_before(hs, "c = c + 1;", "x = 5;");
        remove(hs, "y = x;");
    });
}

#[test]
fn recursive_call_cycle_edit() {
    assert_equivalent(
        "func f(){ x = 1; if (x < 2) { call f(); } y = x; } func main(){ call f(); }",
        |hs| remove(hs, "x = 1;"),
    );
}

fn assert_uniform<P: Problem>(hs: &mut Homeostasis)
where
    P::V: 'static,
    P::Xfer: 'static,
{
    hs.stabilize_all().unwrap();
    let barriers = hs.program().nodes_of(KindTag::Barrier);
    let a = hs.peek::<Idfa<P>>(P::NAME).unwrap();
    let mut checked = 0;
    for b in barriers {
        for s in hs.phases().siblings(b).unwrap() {
            let (ob, os) = (a.output(b), a.output(s));
            if let (Some(ob), Some(os)) = (ob, os) {
                assert_eq!(ob.shared, os.shared, "{} barriers {b} and {s}", P::NAME);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn sibling_barriers_agree_on_shared_facts() {
    let src = "func main(){ shared a; shared b; p0 = &a; \
               parallel { if (t0 < 1) { a = 1; barrier; b = a; } else { b = 2; *p0 = b; barrier; } a = b; } }";
    let mut hs = setup(src, Mode::LzUpd);
    assert_uniform::<PointsTo>(&mut hs);
    assert_uniform::<ReachingDefs>(&mut hs);
    assert_uniform::<Liveness>(&mut hs);
    assert_uniform::<CopyProp>(&mut hs);
    insert_before(&mut hs, "b = a;", "a = b;");
    assert_uniform::<ReachingDefs>(&mut hs);
    assert_uniform::<CopyProp>(&mut hs);
}

#[test]
fn barrier_change_enqueues_siblings() {
    let src = "func main(){ shared a; parallel { if (t0 < 1) { a = 1; barrier; } else { barrier; } } }";
    let mut hs = setup(src, Mode::LzUpd);
    let bs: Vec<NodeId> = hs
        .program()
        .nodes_of(KindTag::Barrier)
        .into_iter()
        .filter(|b| !hs.phases().siblings(*b).unwrap().is_empty())
        .collect();
    assert_eq!(bs.len(), 2);
    let mut rd = Idfa::<ReachingDefs>::new();
    rd.compute_full(&mut hs).unwrap();
    let cursor = hs.log().head();
    remove(&mut hs, "a = 1;");
    let net = hs.log().net_changes(cursor);
    let seeds = rd.seeds(&mut hs, &net).unwrap();
    rd.set_trace(true);
    rd.incremental(&hs, &seeds).unwrap();
    let trace = rd.trace();
    for b in bs {
        assert!(trace.contains(&b), "sibling {b} not reprocessed: {trace:?}");
    }
}

const FIG2: &str = "func main(){ shared v; parallel { if (t0 < 1) { v = 1; flush; } else { flush; t1 = v; } } }";

fn defs_of_v_at_read(hs: &mut Homeostasis) -> BTreeSet<NodeId> {
    let read = find(hs, "t1 = v;");
    let v = hs.program().lookup_loc("main", "v").unwrap();
    hs.query::<Idfa<ReachingDefs>, _>("rd", BTreeSet::new, |a, _| {
        a.input(read).unwrap().get(v).cloned().unwrap_or_default()
    })
    .unwrap()
}

#[test]
fn cross_thread_definition_reaches_only_through_inter_task_edge() {
    let mut hs = setup(FIG2, Mode::LzUpd);
    let write = find(&hs, "v = 1;");
    assert_eq!(hs.supergraph().inter_task().len(), 1);
    assert!(defs_of_v_at_read(&mut hs).contains(&write));

    let mut blind = Homeostasis::new(Program::parse(FIG2).unwrap(), Mode::LzUpd);
    blind.register(Box::new(Idfa::<PointsTo>::new())).unwrap();
    blind.register(Box::new(Idfa::<ReachingDefs>::without_inter_task())).unwrap();
    assert!(!defs_of_v_at_read(&mut blind).contains(&write));
}
