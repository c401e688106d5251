//! Small bundled knowledge bases for examples, demos and offline tests.
//!
//! Neither fixture is real AOP-Wiki content.

use std::collections::BTreeSet;

use crate::bench::{render_gold_answer, BenchmarkQuestion};
use crate::expansion::KE_SECTION;
use crate::ids::{AopId, KeId, KerId};
use crate::kb::{AopEntry, KeyEvent, KeyEventRelationship, KnowledgeBase};
use crate::llm::{MockReply, MockRule, MockScript};
use crate::pipeline::SELECTION_MARKER;

/// 10 key events, 8 relationships and 3 AOPs in the AOP-Wiki dump layout.
pub const FIXTURE_XML: &str = include_str!("../fixtures/aopwiki-fixture.xml");

/// The `mini3` knowledge base in the AOP-Wiki dump layout.
pub const MINI3_XML: &str = include_str!("../fixtures/mini3.xml");

/// 20 questions (5 per category) over [`FIXTURE_XML`].
pub const FIXTURE_QUESTIONS: &str = include_str!("../fixtures/fixture-questions.json");

/// Questions over `mini3`.
pub const MINI3_QUESTIONS: &str = include_str!("../fixtures/mini3-questions.json");

fn ids(v: &[u64]) -> BTreeSet<KeId> {
    v.iter().map(|&i| KeId(i)).collect()
}

/// KE 1 "Activation, AhR" → KE 2 "Oxidative stress" → KE 3 "Apoptosis" →
/// KE 4 "Liver fibrosis" via KERs 10, 11, 12; AOP 100 spans all four events and
/// AOP 200 runs from KE 2 to KE 3.
///
/// Built directly from records, independent of the XML reader.
pub fn mini3() -> KnowledgeBase {
    let ke =
        |id: u64, title: &str, level: &str, species: &[&str], up: &[u64], down: &[u64]| KeyEvent {
            id: KeId(id),
            title: title.to_string(),
            biological_level: Some(level.to_string()),
            description: format!("{title} (fixture)."),
            species: species.iter().map(|s| s.to_string()).collect(),
            upstream_ids: ids(up),
            downstream_ids: ids(down),
        };
    let ker = |id: u64, up: u64, down: u64| KeyEventRelationship {
        id: KerId(id),
        upstream_ke_id: KeId(up),
        downstream_ke_id: KeId(down),
        description: format!("KE {up} leads to KE {down} (fixture)."),
    };
    KnowledgeBase::from_records(
        vec![
            ke(
                1,
                "Activation, AhR",
                "Molecular",
                &["human", "rat"],
                &[],
                &[2],
            ),
            ke(2, "Oxidative stress", "Cellular", &["human"], &[1], &[3]),
            ke(3, "Apoptosis", "Cellular", &["human", "rat"], &[2], &[4]),
            ke(4, "Liver fibrosis", "Organ", &["rat"], &[3], &[]),
        ],
        vec![ker(10, 1, 2), ker(11, 2, 3), ker(12, 3, 4)],
        vec![
            AopEntry {
                id: AopId(100),
                title: "AhR activation leading to liver fibrosis".into(),
                mie_ids: ids(&[1]),
                ke_ids: ids(&[2, 3]),
                ao_ids: ids(&[4]),
                description: "Four-step chain (fixture).".into(),
            },
            AopEntry {
                id: AopId(200),
                title: "Oxidative stress leading to apoptosis".into(),
                mie_ids: ids(&[2]),
                ke_ids: BTreeSet::new(),
                ao_ids: ids(&[3]),
                description: "Two-step chain (fixture).".into(),
            },
        ],
        "fixture",
    )
    .expect("mini3 is consistent")
}

/// A backend that answers every question perfectly: stage 1 returns the
/// question's gold seed ids, stage 2 and baseline calls return its gold answer.
pub fn gold_script(questions: &[BenchmarkQuestion]) -> MockScript {
    let asked = |q: &BenchmarkQuestion| format!("Question:\n{}", q.prompt);
    let mut script = MockScript::default();
    for q in questions {
        let seeds = q
            .gold_seed_ids()
            .iter()
            .map(|id| id.get().to_string())
            .collect::<Vec<_>>()
            .join(", ");
        script = script.with_rule(MockRule::all_of(
            [SELECTION_MARKER.to_string(), asked(q)],
            MockReply::text(format!("[{seeds}]")),
        ));
    }
    for q in questions {
        script = script.with_rule(MockRule::all_of(
            [KE_SECTION.to_string(), asked(q)],
            MockReply::text(render_gold_answer(q)),
        ));
    }
    for q in questions {
        script = script.with_rule(MockRule::contains(
            asked(q),
            MockReply::text(render_gold_answer(q)),
        ));
    }
    script
}

/// A backend whose every reply names an id no question expects.
pub fn adversarial_script() -> MockScript {
    MockScript::default().with_default(MockReply::text("I am not sure. Perhaps KE 0, or AOP 0."))
}
