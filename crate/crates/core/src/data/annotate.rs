//! Template annotator for textual traces.
//!
//! ```text
//! plan <c> <k> [then <c> <k>]*
//! progress <n> done target <c> <k> visible|hidden distance <n>
//! action approach <c> <k> (<move> [<n>])*
//! imagine see (<c> <k> | wall | floor) ahead (target visible|hidden | done)
//! ```

use super::slice::Slice;
use crate::env::{replay, view_cells, Action, AgentState, GridWorld, RenderConfig, Task, WorldObject};
use crate::error::Result;
use crate::vocab::number_word;

fn push_label(out: &mut Vec<String>, o: &WorldObject) {
    out.push(o.color.name().into());
    out.push(o.kind.name().into());
}

fn visible(state: &AgentState, target: &WorldObject, render: &RenderConfig) -> bool {
    view_cells(state.pos, state.heading, render).iter().any(|c| c.2 == target.pos)
}

fn visibility_word(v: bool) -> String {
    if v { "visible" } else { "hidden" }.into()
}

pub fn annotate_textual(slice: &Slice, world: &GridWorld, task: &Task, render: &RenderConfig) -> Result<Vec<String>> {
    let mut out = vec!["plan".to_string()];
    for (i, &g) in task.subgoals.iter().enumerate() {
        if i > 0 {
            out.push("then".into());
        }
        push_label(&mut out, world.object(g)?);
    }

    let current = task.subgoals.get(slice.stop_count).copied();
    out.push("progress".into());
    out.push(number_word(slice.stop_count).into());
    out.push("done".into());
    if let Some(g) = current {
        let target = world.object(g)?;
        out.push("target".into());
        push_label(&mut out, target);
        out.push(visibility_word(visible(&slice.state, target, render)));
        out.push("distance".into());
        out.push(number_word(slice.state.pos.chebyshev(target.pos) as usize).into());
    }

    out.push("action".into());
    if let Some(g) = current {
        out.push("approach".into());
        push_label(&mut out, world.object(g)?);
    }
    let mut i = 0;
    while i < slice.actions.len() {
        let a = slice.actions[i];
        let run = slice.actions[i..].iter().take_while(|&&b| b == a).count();
        out.push(a.name().into());
        if run > 1 {
            out.push(number_word(run).into());
        }
        i += run;
    }

    let states = replay(world, &slice.state, &slice.actions);
    let end = *states.last().expect("replay includes start");
    out.push("imagine".into());
    out.push("see".into());
    let ahead = end.ahead();
    match world.object_at(ahead) {
        Some(o) => push_label(&mut out, o),
        None if world.is_floor(ahead) => out.push("floor".into()),
        None => out.push("wall".into()),
    }
    out.push("ahead".into());
    let stops = slice.actions.iter().filter(|a| **a == Action::Stop).count();
    match task.subgoals.get(slice.stop_count + stops) {
        Some(&g) => {
            out.push("target".into());
            out.push(visibility_word(visible(&end, world.object(g)?, render)));
        }
        None => out.push("done".into()),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::world::tests::open_world;
    use crate::env::{Color, Heading, ObjectKind, Pos};
    use crate::vocab::Vocabulary;

    #[test]
    fn approach_and_stop_words_appear() {
        let w = open_world(12, 12, &[(Color::Red, ObjectKind::Chest, Pos::new(5, 2))]);
        let start = AgentState::new(Pos::new(5, 6), Heading::N);
        let task = Task {
            instruction: vec![],
            subgoals: vec![0],
            start,
            budgets: vec![18],
        };
        let slice = Slice {
            start: 0,
            actions: vec![Action::Forward, Action::Forward, Action::Forward, Action::Stop],
            stop_count: 0,
            history: vec![],
            state: start,
        };
        let t = annotate_textual(&slice, &w, &task, &RenderConfig::default()).unwrap();
        let joined = t.join(" ");
        assert!(joined.contains("approach red chest"), "{joined}");
        assert!(joined.contains("forward three stop"), "{joined}");
        assert_eq!(&t[..3], &["plan", "red", "chest"]);
        assert_eq!(t.iter().filter(|w| *w == "then").count(), 0);
        assert_eq!(t, annotate_textual(&slice, &w, &task, &RenderConfig::default()).unwrap());
        assert!(joined.ends_with("see red chest ahead done"), "{joined}");
        // every word is in the vocabulary
        Vocabulary::new(4).words(&t).unwrap();
    }
}
