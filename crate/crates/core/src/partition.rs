//! Intra-/inter-source partitioning of mapping assertions and the merge
//! rules that combine partitions into execution groups.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rml::{AssertionId, AssertionKind, DataIntegrationSystem, PredicateKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    Intra,
    Inter,
    Merged,
}

/// One of the initial partitions a group is made of.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Intra(String),
    /// (child source, parent source)
    Inter(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionGroup {
    pub id: GroupId,
    pub kind: GroupKind,
    /// Assertions this group owns. Members of all groups partition M.
    pub members: BTreeSet<AssertionId>,
    /// Concept assertions owned elsewhere that this group also executes.
    pub copies: BTreeSet<AssertionId>,
    /// Sources read by the group, in first-use order.
    pub source_footprint: Vec<String>,
    pub defined_predicates: BTreeSet<PredicateKey>,
    pub parts: Vec<Part>,
}

impl AssertionGroup {
    /// Members followed by copies.
    pub fn executed(&self) -> impl Iterator<Item = AssertionId> + '_ {
        self.members.iter().chain(self.copies.iter()).copied()
    }

    fn is_intra_only(&self) -> bool {
        self.kind == GroupKind::Intra
    }

    fn refresh(&mut self, dis: &DataIntegrationSystem) {
        self.copies.retain(|c| !self.members.contains(c));
        self.defined_predicates = self.executed().map(|a| dis.assertion(a).key()).collect();
        let mut footprint: Vec<String> = Vec::new();
        for part in &self.parts {
            let sources: &[&String] = match part {
                Part::Intra(s) => &[s],
                Part::Inter(c, p) => &[c, p],
            };
            for s in sources {
                if !footprint.iter().any(|f| f == *s) {
                    footprint.push((*s).clone());
                }
            }
        }
        self.source_footprint = footprint;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartitionSet {
    /// Ordered by id.
    pub groups: Vec<AssertionGroup>,
}

impl PartitionSet {
    pub fn group(&self, id: GroupId) -> Option<&AssertionGroup> {
        self.groups.iter().find(|g| g.id == id)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Checks that members cover every assertion exactly once.
    pub fn check_laws(&self, dis: &DataIntegrationSystem) -> Result<(), String> {
        let mut seen = HashSet::new();
        for g in &self.groups {
            for m in &g.members {
                if !seen.insert(*m) {
                    return Err(format!("{m} is a member of more than one group"));
                }
            }
        }
        for a in &dis.assertions {
            if !seen.contains(&a.id) {
                return Err(format!("{} belongs to no group", a.id));
            }
        }
        if seen.len() != dis.assertions.len() {
            return Err("groups reference unknown assertions".into());
        }
        Ok(())
    }

    /// A single group holding every assertion.
    pub fn single_group(dis: &DataIntegrationSystem) -> PartitionSet {
        if dis.assertions.is_empty() {
            return PartitionSet { groups: Vec::new() };
        }
        let mut g = AssertionGroup {
            id: GroupId(1),
            kind: GroupKind::Merged,
            members: dis.assertions.iter().map(|a| a.id).collect(),
            copies: BTreeSet::new(),
            source_footprint: Vec::new(),
            defined_predicates: BTreeSet::new(),
            parts: dis.sources.iter().map(|s| Part::Intra(s.id.clone())).collect(),
        };
        g.refresh(dis);
        PartitionSet { groups: vec![g] }
    }
}

/// Builds one Intra group per source and one Inter group per (child, parent)
/// source pair linked by multi-source roles.
pub fn initial_partitions(dis: &DataIntegrationSystem) -> PartitionSet {
    let mut intra: HashMap<&str, BTreeSet<AssertionId>> = HashMap::new();
    let mut inter: BTreeMap<(usize, usize), BTreeSet<AssertionId>> = BTreeMap::new();
    let index = |s: &str| dis.source_index(s).expect("assertion source resolves");
    for a in &dis.assertions {
        match (a.kind, a.parent_source()) {
            (AssertionKind::MultiSourceRole, Some(p)) if p != a.child_source() => {
                inter.entry((index(a.child_source()), index(p))).or_default().insert(a.id);
            }
            _ => {
                intra.entry(a.child_source()).or_default().insert(a.id);
            }
        }
    }

    // Referenced concepts are owned by the Inter group with the smallest
    // (child id, parent id) key and copied into every other referrer.
    let mut referrers: BTreeMap<AssertionId, Vec<(String, String)>> = BTreeMap::new();
    for (&(c, p), members) in &inter {
        let key = (dis.sources[c].id.clone(), dis.sources[p].id.clone());
        for m in members {
            let r = dis.assertion(*m).referenced_assertion.expect("multi-source role references a concept");
            let list = referrers.entry(r).or_default();
            if !list.contains(&key) {
                list.push(key.clone());
            }
        }
    }
    let owner: HashMap<AssertionId, (String, String)> = referrers
        .into_iter()
        .map(|(r, keys)| (r, keys.into_iter().min().expect("non-empty")))
        .collect();

    let mut groups = Vec::new();
    let mut next = 1;
    let mut push = |members: BTreeSet<AssertionId>, copies: BTreeSet<AssertionId>, kind, part: Part| {
        if members.is_empty() {
            return;
        }
        let mut g = AssertionGroup {
            id: GroupId(next),
            kind,
            members,
            copies,
            source_footprint: Vec::new(),
            defined_predicates: BTreeSet::new(),
            parts: vec![part],
        };
        g.refresh(dis);
        groups.push(g);
        next += 1;
    };
    for (si, source) in dis.sources.iter().enumerate() {
        let mut members = intra.remove(source.id.as_str()).unwrap_or_default();
        let moved: BTreeSet<AssertionId> = members.iter().filter(|m| owner.contains_key(m)).copied().collect();
        members.retain(|m| !moved.contains(m));
        push(members, moved, GroupKind::Intra, Part::Intra(source.id.clone()));
        for (&(_, p), msr) in inter.range((si, 0)..(si + 1, 0)) {
            let key = (source.id.clone(), dis.sources[p].id.clone());
            let mut members = msr.clone();
            let mut copies = BTreeSet::new();
            for m in msr {
                let r = dis.assertion(*m).referenced_assertion.expect("checked above");
                if owner[&r] == key {
                    members.insert(r);
                } else {
                    copies.insert(r);
                }
            }
            push(members, copies, GroupKind::Inter, Part::Inter(key.0, key.1));
        }
    }
    PartitionSet { groups }
}

pub fn merge_to_fixed_point(p: &PartitionSet, dis: &DataIntegrationSystem) -> PartitionSet {
    merge_rules(p, dis, None)
}

/// Applies the merge rules until neither fires; `on_step` sees the set after
/// every individual merge.
pub fn merge_to_fixed_point_with(
    p: &PartitionSet,
    dis: &DataIntegrationSystem,
    mut on_step: impl FnMut(&PartitionSet),
) -> PartitionSet {
    merge_rules(p, dis, Some(&mut on_step))
}

type Slots = Vec<Option<AssertionGroup>>;

fn snapshot(slots: &Slots) -> PartitionSet {
    PartitionSet {
        groups: slots.iter().flatten().cloned().collect(),
    }
}

fn merge_rules(
    p: &PartitionSet,
    dis: &DataIntegrationSystem,
    mut on_step: Option<&mut dyn FnMut(&PartitionSet)>,
) -> PartitionSet {
    let linked: HashSet<(String, String)> = p
        .groups
        .iter()
        .flat_map(|g| g.parts.iter())
        .filter_map(|part| match part {
            Part::Inter(c, p) => Some((c.clone(), p.clone())),
            Part::Intra(_) => None,
        })
        .collect();
    let mut slots: Slots = p.groups.iter().cloned().map(Some).collect();

    loop {
        let mut changed = false;

        // Inter + Intra of the referenced source. For each parent source the
        // Inter group with the smallest (child, parent) key absorbs it.
        let intra_at: HashMap<String, usize> = slots
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().filter(|g| g.is_intra_only()).map(|g| (intra_source(g).to_string(), i)))
            .collect();
        let mut best: BTreeMap<&str, ((&str, &str), usize)> = BTreeMap::new();
        for (i, g) in slots.iter().enumerate() {
            let Some(g) = g.as_ref().filter(|g| g.kind == GroupKind::Inter) else { continue };
            let Part::Inter(child, parent) = &g.parts[0] else { continue };
            if !intra_at.contains_key(parent) {
                continue;
            }
            let key = (child.as_str(), parent.as_str());
            let e = best.entry(parent.as_str()).or_insert((key, i));
            if key < e.0 {
                *e = (key, i);
            }
        }
        let mut merges: Vec<((String, String), usize, usize)> = best
            .into_iter()
            .map(|(parent, ((c, p), i))| ((c.to_string(), p.to_string()), i, intra_at[parent]))
            .collect();
        merges.sort();
        for (_, absorber, intra) in merges {
            merge_slots(&mut slots, absorber, intra, dis);
            if let Some(f) = on_step.as_mut() {
                f(&snapshot(&slots));
            }
            changed = true;
        }

        // Intra + Intra when no inter-source partition links their sources.
        for i in 0..slots.len() {
            let Some(a) = slots[i].as_ref().filter(|g| g.is_intra_only()).map(|g| intra_source(g).to_string()) else {
                continue;
            };
            let partner = (i + 1..slots.len()).find(|&j| {
                slots[j].as_ref().is_some_and(|g| {
                    g.is_intra_only() && {
                        let b = intra_source(g);
                        !linked.contains(&(a.clone(), b.to_string())) && !linked.contains(&(b.to_string(), a.clone()))
                    }
                })
            });
            if let Some(j) = partner {
                merge_slots(&mut slots, i, j, dis);
                if let Some(f) = on_step.as_mut() {
                    f(&snapshot(&slots));
                }
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    let mut set = PartitionSet {
        groups: slots.into_iter().flatten().collect(),
    };
    settle_ownership(&mut set, dis);
    for (n, g) in set.groups.iter_mut().enumerate() {
        g.id = GroupId(n as u32 + 1);
    }
    set
}

fn intra_source(g: &AssertionGroup) -> &str {
    match &g.parts[0] {
        Part::Intra(s) => s,
        Part::Inter(c, _) => c,
    }
}

/// Merges the group in slot `b` into the one in slot `a`. The absorber's
/// parts come first; the result takes the smaller id and the earlier slot.
fn merge_slots(slots: &mut Slots, a: usize, b: usize, dis: &DataIntegrationSystem) {
    let mut g = slots[a].take().expect("live slot");
    let other = slots[b].take().expect("live slot");
    g.parts.extend(other.parts);
    g.id = g.id.min(other.id);
    g.kind = GroupKind::Merged;
    g.members.extend(other.members);
    g.copies.extend(other.copies);
    g.refresh(dis);
    slots[a.min(b)] = Some(g);
}

/// A referenced concept moves to the group holding its source's Intra
/// partition; every other group executing it keeps a copy.
fn settle_ownership(set: &mut PartitionSet, dis: &DataIntegrationSystem) {
    let home: HashMap<String, usize> = set
        .groups
        .iter()
        .enumerate()
        .flat_map(|(i, g)| {
            g.parts.iter().filter_map(move |p| match p {
                Part::Intra(s) => Some((s.clone(), i)),
                Part::Inter(..) => None,
            })
        })
        .collect();
    let mut moves = Vec::new();
    for (i, g) in set.groups.iter().enumerate() {
        for m in &g.members {
            let a = dis.assertion(*m);
            if a.kind != AssertionKind::Concept {
                continue;
            }
            if let Some(&h) = home.get(a.child_source()) {
                if h != i && set.groups[h].copies.contains(m) {
                    moves.push((*m, i, h));
                }
            }
        }
    }
    for (m, from, to) in moves {
        set.groups[from].members.remove(&m);
        set.groups[from].copies.insert(m);
        set.groups[to].copies.remove(&m);
        set.groups[to].members.insert(m);
    }
    for g in &mut set.groups {
        g.refresh(dis);
    }
}

/// The two conditions under which the greedy plan is claimed optimal, checked
/// against a system and its partitioning input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem1Check {
    pub met: bool,
    pub violations: Vec<String>,
}

pub fn theorem1_conditions(dis: &DataIntegrationSystem) -> Theorem1Check {
    let mut violations = Vec::new();
    let mut child_sources: BTreeMap<AssertionId, BTreeSet<&str>> = BTreeMap::new();
    for a in &dis.assertions {
        if a.kind == AssertionKind::MultiSourceRole {
            if let Some(r) = a.referenced_assertion {
                child_sources.entry(r).or_default().insert(a.child_source());
            }
        }
    }
    for (concept, sources) in child_sources {
        if sources.len() > 1 {
            violations.push(format!(
                "{} ({}) is referenced from {} child sources",
                concept,
                dis.assertion(concept).label(),
                sources.len()
            ));
        }
    }
    let mut defined: BTreeMap<PredicateKey, usize> = BTreeMap::new();
    for a in &dis.assertions {
        *defined.entry(a.key()).or_default() += 1;
    }
    for (key, n) in defined {
        if n > 1 {
            violations.push(format!("{key} is defined by {n} assertions"));
        }
    }
    Theorem1Check {
        met: violations.is_empty(),
        violations,
    }
}

/// Partition + merge in one call.
pub fn partition(dis: &DataIntegrationSystem) -> PartitionSet {
    merge_to_fixed_point(&initial_partitions(dis), dis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rml::{extract_assertions, parse_mappings};
    use std::path::Path;

    fn load(doc: &str) -> DataIntegrationSystem {
        extract_assertions(&parse_mappings(doc).unwrap(), Path::new("")).unwrap()
    }

    fn labels(dis: &DataIntegrationSystem, ids: &BTreeSet<AssertionId>) -> Vec<String> {
        let mut v: Vec<_> = ids.iter().map(|i| dis.assertion(*i).label()).collect();
        v.sort();
        v
    }

    #[test]
    fn running_example_partitions() {
        let dis = load(include_str!("../tests/data/running_example/mapping.ttl"));
        let p = initial_partitions(&dis);
        assert_eq!(p.len(), 3);
        assert_eq!(labels(&dis, &p.groups[0].members), ["C1", "C2", "p1", "p3", "p5"]);
        assert_eq!(p.groups[0].source_footprint, ["S1"]);
        assert_eq!(labels(&dis, &p.groups[1].members), ["C3", "p4"]);
        assert_eq!(p.groups[1].kind, GroupKind::Inter);
        assert_eq!(p.groups[1].source_footprint, ["S1", "S3"]);
        assert_eq!(labels(&dis, &p.groups[2].members), ["p6"]);
        assert_eq!(labels(&dis, &p.groups[2].copies), ["C3"]);
        p.check_laws(&dis).unwrap();

        let m = merge_to_fixed_point(&p, &dis);
        assert_eq!(m.len(), 2);
        assert_eq!(labels(&dis, &m.groups[1].members), ["C3", "p4", "p6"]);
        assert!(m.groups[1].copies.is_empty());
        m.check_laws(&dis).unwrap();
    }

    #[test]
    fn motivating_example_groups() {
        let dis = load(include_str!("../tests/data/motivating/mapping.ttl"));
        let m = partition(&dis);
        let shown: Vec<_> = m.groups.iter().map(|g| labels(&dis, &g.members)).collect();
        assert_eq!(
            shown,
            [
                vec!["C2", "p1", "p5"],
                vec!["C1", "C3", "p3", "p4"],
                vec!["C4", "p7"],
                vec!["C1", "C5", "p3", "p8"],
            ]
        );
        assert!(m.groups.iter().all(|g| g.source_footprint.len() <= 2));
    }

    fn chain(pairs: &[(&str, &str)], singles: &[&str]) -> String {
        let mut doc = String::from(
            "@prefix rr: <http://www.w3.org/ns/r2rml#> .\n@prefix rml: <http://semweb.mmlab.be/ns/rml#> .\n",
        );
        let mut sources: Vec<&str> = singles.to_vec();
        for (c, p) in pairs {
            for s in [c, p] {
                if !sources.contains(s) {
                    sources.push(s);
                }
            }
        }
        for s in &sources {
            doc += &format!(
                "<#{s}> rml:logicalSource [ rml:source \"{s}.csv\" ] ; rr:subjectMap [ rr:template \"http://x/{s}/{{id}}\" ; rr:class <http://x/C{s}> ] ;\n rr:predicateObjectMap [ rr:predicate <http://x/a{s}> ; rr:objectMap [ rml:reference \"id\" ] ] .\n"
            );
        }
        for (i, (c, p)) in pairs.iter().enumerate() {
            doc += &format!(
                "<#J{i}> rml:logicalSource [ rml:source \"{c}.csv\" ] ; rr:subjectMap [ rr:template \"http://x/{c}/{{id}}\" ] ;\n rr:predicateObjectMap [ rr:predicate <http://x/j{i}> ; rr:objectMap [ rr:parentTriplesMap <#{p}> ; rr:joinCondition [ rr:child \"id\" ; rr:parent \"id\" ] ] ] .\n"
            );
        }
        doc
    }

    #[test]
    fn single_source_gives_one_group() {
        let dis = load(&chain(&[], &["A"]));
        assert_eq!(initial_partitions(&dis).len(), 1);
        assert_eq!(partition(&dis).len(), 1);
    }

    #[test]
    fn opposite_joins_give_two_inter_groups() {
        let dis = load(&chain(&[("A", "B"), ("B", "A")], &[]));
        let p = initial_partitions(&dis);
        let inter: Vec<_> = p.groups.iter().filter(|g| g.kind == GroupKind::Inter).collect();
        assert_eq!(inter.len(), 2);
        assert_eq!(inter[0].source_footprint, ["A", "B"]);
        assert_eq!(inter[1].source_footprint, ["B", "A"]);
    }

    #[test]
    fn shared_parent_absorbed_once() {
        let dis = load(&chain(&[("S1", "S2"), ("S3", "S2")], &[]));
        let p = initial_partitions(&dis);
        let m = merge_to_fixed_point(&p, &dis);
        m.check_laws(&dis).unwrap();
        let absorbed: Vec<_> = m
            .groups
            .iter()
            .filter(|g| g.parts.contains(&Part::Intra("S2".into())))
            .collect();
        assert_eq!(absorbed.len(), 1);
        assert!(absorbed[0].parts.contains(&Part::Inter("S1".into(), "S2".into())));
        let other = m
            .groups
            .iter()
            .find(|g| g.parts.contains(&Part::Inter("S3".into(), "S2".into())))
            .unwrap();
        assert!(!other.parts.contains(&Part::Intra("S2".into())));
        assert_eq!(other.copies.len(), 1);
        assert!(!theorem1_conditions(&dis).met);
    }

    #[test]
    fn unlinked_intra_groups_pair_up() {
        let dis = load(&chain(&[], &["A", "B", "C"]));
        let m = partition(&dis);
        assert_eq!(m.len(), 2);
        assert_eq!(m.groups[0].source_footprint, ["A", "B"]);
        assert_eq!(m.groups[1].source_footprint, ["C"]);
    }

    #[test]
    fn merge_is_idempotent_and_steps_keep_laws() {
        let dis = load(&chain(&[("A", "B"), ("C", "B"), ("D", "E")], &["F", "G"]));
        let p = initial_partitions(&dis);
        let mut steps = 0;
        let once = merge_to_fixed_point_with(&p, &dis, |s| {
            s.check_laws(&dis).unwrap();
            steps += 1;
        });
        assert!(steps < dis.assertions.len());
        assert_eq!(merge_to_fixed_point(&once, &dis), once);
        assert_eq!(merge_to_fixed_point(&p, &dis), once);
    }

    #[test]
    fn single_group_is_fixed() {
        let dis = load(&chain(&[("A", "B")], &[]));
        let one = PartitionSet::single_group(&dis);
        assert_eq!(merge_to_fixed_point(&one, &dis), one);
    }
}
