//! Random knowledge bases, brute-force reference implementations and an XML
//! writer for the dump layout, shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use aop_smart_core::kb::{AopEntry, KeyEvent, KeyEventRelationship};
use aop_smart_core::{AopId, KeId, KerId, KnowledgeBase};
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

pub const SPECIES: &[&str] = &[
    "human",
    "rat",
    "mouse",
    "zebrafish",
    "Daphnia magna",
    "chicken",
];

const WORDS: &[&str] = &[
    "Activation",
    "Inhibition",
    "Increase",
    "Decrease",
    "oxidative",
    "stress",
    "receptor",
    "mitochondrial",
    "apoptosis",
    "fibrosis",
    "liver",
    "kidney",
    "AhR",
    "PPARα",
    "collagen",
    "R&D",
    "<marker>",
    "cell",
    "death",
    "signalling",
];

/// Markup-free words for descriptions, which lose tags during ingest.
const PLAIN_WORDS: &[&str] = &[
    "binding",
    "leads",
    "to",
    "increased",
    "reduced",
    "expression",
    "in",
    "the",
    "R&D",
    "hepatocytes",
    "β-oxidation",
    "über",
    "signal",
];

const LEVELS: &[&str] = &["Molecular", "Cellular", "Tissue", "Organ", "Individual"];

#[derive(Debug, Clone)]
pub struct Records {
    pub kes: Vec<KeyEvent>,
    pub kers: Vec<KeyEventRelationship>,
    pub aops: Vec<AopEntry>,
}

impl Records {
    pub fn ke_ids(&self) -> Vec<KeId> {
        self.kes.iter().map(|k| k.id).collect()
    }

    pub fn build(&self) -> KnowledgeBase {
        KnowledgeBase::from_records(
            self.kes.clone(),
            self.kers.clone(),
            self.aops.clone(),
            "random",
        )
        .expect("generated records are consistent")
    }
}

fn phrase_from(rng: &mut StdRng, words: &[&str], min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| *words.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn phrase(rng: &mut StdRng, min: usize, max: usize) -> String {
    phrase_from(rng, WORDS, min, max)
}

fn text(rng: &mut StdRng, min: usize, max: usize) -> String {
    phrase_from(rng, PLAIN_WORDS, min, max)
}

fn distinct_ids(rng: &mut StdRng, n: usize, space: u64) -> Vec<u64> {
    let mut pool: Vec<u64> = (1..=space).collect();
    pool.shuffle(rng);
    pool.truncate(n);
    pool
}

fn pick_set(rng: &mut StdRng, from: &[KeId], min: usize, max: usize) -> BTreeSet<KeId> {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| *from.choose(rng).expect("non-empty"))
        .collect()
}

/// Random records with at most the given entity counts. Titles and
/// descriptions are already in normalized form, so they survive ingest
/// unchanged under the default truncation limit.
pub fn random_records(
    rng: &mut StdRng,
    max_kes: usize,
    max_kers: usize,
    max_aops: usize,
) -> Records {
    let n = rng.random_range(1..=max_kes);
    let ids: Vec<KeId> = distinct_ids(rng, n, (max_kes as u64) * 20)
        .into_iter()
        .map(KeId)
        .collect();

    let m = rng.random_range(0..=max_kers);
    let ker_ids = distinct_ids(rng, m, (max_kers as u64 + 1) * 20);
    let mut kers = Vec::with_capacity(m);
    for kid in ker_ids {
        let up = *ids.choose(rng).expect("non-empty");
        let down = if rng.random_bool(0.05) {
            up
        } else {
            *ids.choose(rng).expect("non-empty")
        };
        kers.push(KeyEventRelationship {
            id: KerId(kid),
            upstream_ke_id: up,
            downstream_ke_id: down,
            description: text(rng, 0, 12),
        });
    }

    let mut up_of: BTreeMap<KeId, BTreeSet<KeId>> = BTreeMap::new();
    let mut down_of: BTreeMap<KeId, BTreeSet<KeId>> = BTreeMap::new();
    for r in &kers {
        down_of
            .entry(r.upstream_ke_id)
            .or_default()
            .insert(r.downstream_ke_id);
        up_of
            .entry(r.downstream_ke_id)
            .or_default()
            .insert(r.upstream_ke_id);
    }

    let kes = ids
        .iter()
        .map(|&id| {
            let mut species: Vec<String> = SPECIES
                .iter()
                .filter(|_| rng.random_bool(0.4))
                .map(|s| s.to_string())
                .collect();
            species.shuffle(rng);
            KeyEvent {
                id,
                title: phrase(rng, 1, 5),
                biological_level: rng
                    .random_bool(0.8)
                    .then(|| LEVELS.choose(rng).expect("non-empty").to_string()),
                description: text(rng, 0, 20),
                species,
                upstream_ids: up_of.get(&id).cloned().unwrap_or_default(),
                downstream_ids: down_of.get(&id).cloned().unwrap_or_default(),
            }
        })
        .collect();

    let k = rng.random_range(0..=max_aops);
    let aop_ids = distinct_ids(rng, k, (max_aops as u64 + 1) * 20);
    let aops = aop_ids
        .into_iter()
        .map(|aid| AopEntry {
            id: AopId(aid),
            title: phrase(rng, 2, 6),
            mie_ids: pick_set(rng, &ids, 1, 2),
            ke_ids: pick_set(rng, &ids, 0, 5),
            ao_ids: pick_set(rng, &ids, 1, 2),
            description: text(rng, 0, 15),
        })
        .collect();

    Records { kes, kers, aops }
}

/// Records and KB bounded by 50 KEs, 100 KERs and 20 AOPs.
pub fn random_kb(seed: u64) -> (Records, KnowledgeBase) {
    let mut rng = StdRng::seed_from_u64(seed);
    let records = random_records(&mut rng, 50, 100, 20);
    let kb = records.build();
    (records, kb)
}

/// Zero to five distinct KE ids from `records`, in random order.
pub fn random_seeds(rng: &mut StdRng, records: &Records) -> Vec<KeId> {
    let mut ids = records.ke_ids();
    ids.shuffle(rng);
    ids.truncate(rng.random_range(0..=5));
    ids
}

/// Random subset of the KE ids.
pub fn random_ke_subset(rng: &mut StdRng, records: &Records) -> BTreeSet<KeId> {
    let p = rng.random_range(0.0..=1.0);
    records
        .kes
        .iter()
        .filter(|_| rng.random_bool(p))
        .map(|k| k.id)
        .collect()
}

// Reference implementations. They read the raw record lists only and never
// touch the adjacency stored on KeyEvent.

pub fn oracle_expand(records: &Records, seeds: &[KeId]) -> BTreeSet<KeId> {
    let mut out: BTreeSet<KeId> = seeds.iter().copied().collect();
    for r in &records.kers {
        if seeds.contains(&r.upstream_ke_id) {
            out.insert(r.downstream_ke_id);
        }
        if seeds.contains(&r.downstream_ke_id) {
            out.insert(r.upstream_ke_id);
        }
    }
    out
}

pub fn oracle_kers(records: &Records, set: &BTreeSet<KeId>) -> BTreeSet<KerId> {
    records
        .kers
        .iter()
        .filter(|r| set.contains(&r.upstream_ke_id) && set.contains(&r.downstream_ke_id))
        .map(|r| r.id)
        .collect()
}

pub fn oracle_aops(records: &Records, set: &BTreeSet<KeId>) -> BTreeSet<AopId> {
    records
        .aops
        .iter()
        .filter(|a| {
            let events: HashSet<KeId> = a
                .mie_ids
                .iter()
                .chain(a.ke_ids.iter())
                .chain(a.ao_ids.iter())
                .copied()
                .collect();
            events.iter().filter(|e| set.contains(e)).count() >= 2
        })
        .map(|a| a.id)
        .collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Serializes records in the AOP-Wiki dump layout, with opaque internal ids and
/// the public ids only in the vendor-specific mapping section.
pub fn to_aopwiki_xml(records: &Records) -> String {
    let mut taxa: Vec<&str> = Vec::new();
    for k in &records.kes {
        for s in &k.species {
            if !taxa.contains(&s.as_str()) {
                taxa.push(s);
            }
        }
    }
    let tax_id = |name: &str| format!("tax-{}", taxa.iter().position(|t| *t == name).unwrap());

    let mut x = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<data xmlns=\"http://www.aopkb.org/aop-xml\">\n");
    for t in &taxa {
        x += &format!(
            "  <taxonomy id=\"{}\">\n    <source>NCBI</source>\n    <name>{}</name>\n  </taxonomy>\n",
            tax_id(t),
            esc(t)
        );
    }
    for k in &records.kes {
        x += &format!(
            "  <key-event id=\"ke-{}\">\n    <title>{}</title>\n",
            k.id.get(),
            esc(&k.title)
        );
        if let Some(level) = &k.biological_level {
            x += &format!(
                "    <biological-organization-level>{}</biological-organization-level>\n",
                esc(level)
            );
        }
        x += &format!(
            "    <description>{}</description>\n    <applicability>\n",
            esc(&k.description)
        );
        for s in &k.species {
            x += &format!(
                "      <taxonomy taxonomy-id=\"{}\">\n        <evidence>High</evidence>\n      </taxonomy>\n",
                tax_id(s)
            );
        }
        x += "    </applicability>\n  </key-event>\n";
    }
    for r in &records.kers {
        x += &format!(
            "  <key-event-relationship id=\"ker-{}\">\n    <title>\n      <upstream-id>ke-{}</upstream-id>\n      <downstream-id>ke-{}</downstream-id>\n    </title>\n    <description>{}</description>\n  </key-event-relationship>\n",
            r.id.get(),
            r.upstream_ke_id.get(),
            r.downstream_ke_id.get(),
            esc(&r.description)
        );
    }
    for a in &records.aops {
        x += &format!(
            "  <aop id=\"aop-{}\">\n    <title>{}</title>\n    <abstract>{}</abstract>\n",
            a.id.get(),
            esc(&a.title),
            esc(&a.description)
        );
        for m in &a.mie_ids {
            x += &format!(
                "    <molecular-initiating-event key-event-id=\"ke-{}\"/>\n",
                m.get()
            );
        }
        for o in &a.ao_ids {
            x += &format!("    <adverse-outcome key-event-id=\"ke-{}\"/>\n", o.get());
        }
        x += "    <key-events>\n";
        for k in &a.ke_ids {
            x += &format!("      <key-event id=\"ke-{}\"/>\n", k.get());
        }
        x += "    </key-events>\n  </aop>\n";
    }
    x += "  <vendor-specific>\n";
    for a in &records.aops {
        x += &format!(
            "    <aop-reference id=\"aop-{0}\" aop-wiki-id=\"{0}\"/>\n",
            a.id.get()
        );
    }
    for k in &records.kes {
        x += &format!(
            "    <key-event-reference id=\"ke-{0}\" aop-wiki-id=\"{0}\"/>\n",
            k.id.get()
        );
    }
    for r in &records.kers {
        x += &format!(
            "    <key-event-relationship-reference id=\"ker-{0}\" aop-wiki-id=\"{0}\"/>\n",
            r.id.get()
        );
    }
    x += "  </vendor-specific>\n</data>\n";
    x
}
