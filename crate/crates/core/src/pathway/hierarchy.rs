use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// One row of a gene-set file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneSet {
    pub id: String,
    pub description: String,
    /// Members in first-seen order, deduplicated.
    pub genes: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses a GMT-style file: `<id>\t<description>\t<gene>...` per line.
pub fn parse_gene_sets(path: impl AsRef<Path>) -> Result<Vec<GeneSet>> {
    let path = path.as_ref();
    read_gene_sets(open(path)?, path)
}

pub fn read_gene_sets(reader: impl BufRead, path: &Path) -> Result<Vec<GeneSet>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected at least 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let mut seen = HashSet::new();
        let genes = cols[2..]
            .iter()
            .map(|g| g.trim())
            .filter(|g| !g.is_empty() && seen.insert(*g))
            .map(str::to_string)
            .collect();
        out.push(GeneSet {
            id: cols[0].trim().to_string(),
            description: cols[1].to_string(),
            genes,
        });
    }
    Ok(out)
}

/// Renders gene sets in the format read by [`parse_gene_sets`].
pub fn format_gene_sets(sets: &[GeneSet]) -> String {
    sets.iter()
        .map(|s| format!("{}\t{}\t{}\n", s.id, s.description, s.genes.join("\t")))
        .collect()
}

/// Renders `<parent>\t<child>` rows.
pub fn format_relations(relations: &[(String, String)]) -> String {
    relations.iter().map(|(p, c)| format!("{p}\t{c}\n")).collect()
}

/// Parses `<parent>\t<child>` rows into a duplicate-free, acyclic relation list.
pub fn parse_relations(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    read_relations(open(path)?, path)
}

pub fn read_relations(reader: impl BufRead, path: &Path) -> Result<Vec<(String, String)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 2 || cols.iter().any(|c| c.is_empty()) {
            return Err(Error::parse(path, i + 1, "expected `<parent>\\t<child>`"));
        }
        if cols[0] == cols[1] {
            return Err(Error::Validation(format!(
                "{}:{}: self-relation on {}",
                path.display(),
                i + 1,
                cols[0]
            )));
        }
        let edge = (cols[0].to_string(), cols[1].to_string());
        if seen.insert(edge.clone()) {
            out.push(edge);
        }
    }
    check_acyclic(&out)?;
    Ok(out)
}

/// Fails with one concrete cycle if the parent→child relation has any.
pub fn check_acyclic(relations: &[(String, String)]) -> Result<()> {
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (p, c) in relations {
        children.entry(p).or_default().push(c);
        children.entry(c).or_default();
    }
    for list in children.values_mut() {
        list.sort_unstable();
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Open,
        Done,
    }
    let mut mark: BTreeMap<&str, Mark> = children.keys().map(|&k| (k, Mark::Fresh)).collect();

    for &start in children.keys() {
        if mark[start] != Mark::Fresh {
            continue;
        }
        // iterative DFS; stack holds (node, next child position)
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        mark.insert(start, Mark::Open);
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            let kids = &children[node];
            if top.1 < kids.len() {
                let next = kids[top.1];
                top.1 += 1;
                match mark[next] {
                    Mark::Fresh => {
                        mark.insert(next, Mark::Open);
                        stack.push((next, 0));
                    }
                    Mark::Open => {
                        let from = stack.iter().position(|&(n, _)| n == next).unwrap();
                        let mut cycle: Vec<String> =
                            stack[from..].iter().map(|&(n, _)| n.to_string()).collect();
                        cycle.push(next.to_string());
                        return Err(Error::Cycle(cycle));
                    }
                    Mark::Done => {}
                }
            } else {
                mark.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    Ok(())
}

/// Leveled pathway DAG over a gene universe.
#[derive(Clone, Debug)]
pub struct PathwayHierarchy {
    gene_universe: Vec<String>,
    /// Every pathway id mentioned in gene sets or relations with its gene
    /// members; ids that only appear in relations have none.
    pathways: BTreeMap<String, Vec<String>>,
    relations: Vec<(String, String)>,
    level_of: BTreeMap<String, usize>,
}

impl PathwayHierarchy {
    pub fn new(
        gene_universe: Vec<String>,
        gene_sets: &[GeneSet],
        relations: Vec<(String, String)>,
    ) -> Result<Self> {
        check_acyclic(&relations)?;
        let mut pathways: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for set in gene_sets {
            let entry = pathways.entry(set.id.clone()).or_default();
            for g in &set.genes {
                if !entry.contains(g) {
                    entry.push(g.clone());
                }
            }
        }
        for (p, c) in &relations {
            pathways.entry(p.clone()).or_default();
            pathways.entry(c.clone()).or_default();
        }
        let mut h = Self {
            gene_universe,
            pathways,
            relations,
            level_of: BTreeMap::new(),
        };
        h.level_of = assign_levels(&h)?;
        Ok(h)
    }

    pub fn gene_universe(&self) -> &[String] {
        &self.gene_universe
    }

    /// Pathway ids with their gene members, sorted by id.
    pub fn pathways(&self) -> &BTreeMap<String, Vec<String>> {
        &self.pathways
    }

    pub fn relations(&self) -> &[(String, String)] {
        &self.relations
    }

    pub fn level_of(&self) -> &BTreeMap<String, usize> {
        &self.level_of
    }

    pub fn level(&self, pathway: &str) -> Option<usize> {
        self.level_of.get(pathway).copied()
    }

    pub fn max_depth(&self) -> usize {
        self.level_of.values().copied().max().unwrap_or(0)
    }

    pub(crate) fn children_map(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (p, c) in &self.relations {
            children.entry(p.as_str()).or_default().push(c.as_str());
        }
        for list in children.values_mut() {
            list.sort_unstable();
        }
        children
    }

    pub(crate) fn parents_map(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (p, c) in &self.relations {
            parents.entry(c.as_str()).or_default().push(p.as_str());
        }
        for list in parents.values_mut() {
            list.sort_unstable();
        }
        parents
    }

    /// Sub-hierarchy keeping only pathways that reach at least one gene of
    /// the universe. Leaf pathways without universe members are dropped,
    /// then any parent left without children, and levels are recomputed.
    pub fn restrict_to_universe(&self) -> Result<PathwayHierarchy> {
        let universe: HashSet<&str> = self.gene_universe.iter().map(String::as_str).collect();
        let children = self.children_map();
        let mut by_level: Vec<(&str, usize)> =
            self.level_of.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        by_level.sort_by_key(|&(id, lvl)| (lvl, id));

        let mut supported: BTreeSet<&str> = BTreeSet::new();
        for (id, _) in by_level {
            let ok = match children.get(id) {
                Some(kids) => kids.iter().any(|k| supported.contains(k)),
                None => self.pathways[id].iter().any(|g| universe.contains(g.as_str())),
            };
            if ok {
                supported.insert(id);
            }
        }

        let sets: Vec<GeneSet> = self
            .pathways
            .iter()
            .filter(|(id, _)| supported.contains(id.as_str()) && !children.contains_key(id.as_str()))
            .map(|(id, genes)| GeneSet {
                id: id.clone(),
                description: String::new(),
                genes: genes
                    .iter()
                    .filter(|g| universe.contains(g.as_str()))
                    .cloned()
                    .collect(),
            })
            .collect();
        let relations = self
            .relations
            .iter()
            .filter(|(p, c)| supported.contains(p.as_str()) && supported.contains(c.as_str()))
            .cloned()
            .collect();
        PathwayHierarchy::new(self.gene_universe.clone(), &sets, relations)
    }
}

/// Longest-path levels: 1 for pathways with no child pathway, otherwise
/// one more than the deepest child.
///
/// Gene members of a pathway that also has child pathways play no part in
/// leveling.
pub fn assign_levels(h: &PathwayHierarchy) -> Result<BTreeMap<String, usize>> {
    let children = h.children_map();
    for (id, genes) in &h.pathways {
        if genes.is_empty() && !children.contains_key(id.as_str()) {
            return Err(Error::Validation(format!(
                "pathway {id} has neither gene members nor child pathways"
            )));
        }
    }

    let mut level: BTreeMap<&str, usize> = BTreeMap::new();
    for id in h.pathways.keys() {
        let mut stack: Vec<&str> = vec![id.as_str()];
        while let Some(&node) = stack.last() {
            if level.contains_key(node) {
                stack.pop();
                continue;
            }
            match children.get(node) {
                None => {
                    level.insert(node, 1);
                    stack.pop();
                }
                Some(kids) => {
                    let pending: Vec<&str> =
                        kids.iter().copied().filter(|k| !level.contains_key(k)).collect();
                    if pending.is_empty() {
                        let deepest = kids.iter().map(|k| level[k]).max().unwrap_or(0);
                        level.insert(node, deepest + 1);
                        stack.pop();
                    } else {
                        stack.extend(pending);
                    }
                }
            }
        }
    }
    Ok(level.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(text: &str) -> Result<Vec<GeneSet>> {
        read_gene_sets(text.as_bytes(), Path::new("sets.gmt"))
    }

    fn rels(text: &str) -> Result<Vec<(String, String)>> {
        read_relations(text.as_bytes(), Path::new("rel.tsv"))
    }

    fn set(id: &str, genes: &[&str]) -> GeneSet {
        GeneSet {
            id: id.into(),
            description: String::new(),
            genes: genes.iter().map(|g| g.to_string()).collect(),
        }
    }

    fn edge(p: &str, c: &str) -> (String, String) {
        (p.into(), c.into())
    }

    #[test]
    fn gene_set_rows() {
        let parsed = sets("P1\tdesc\tG1\tG2\n").unwrap();
        assert_eq!(parsed, vec![GeneSet {
            id: "P1".into(),
            description: "desc".into(),
            genes: vec!["G1".into(), "G2".into()]
        }]);
        let dedup = sets("P1\tdesc\tG1\tG1\n").unwrap();
        assert_eq!(dedup[0].genes, vec!["G1".to_string()]);
        assert!(sets("").unwrap().is_empty());
    }

    #[test]
    fn short_gene_set_line_reports_line_number() {
        let err = sets("P1\tdesc\tG1\nP2\tdesc\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = parse_gene_sets("/nonexistent/x.gmt").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.gmt"));
    }

    #[test]
    fn relation_rows() {
        assert_eq!(rels("R\tP1\nR\tP2\n").unwrap(), vec![edge("R", "P1"), edge("R", "P2")]);
        assert_eq!(rels("R\tP1\nR\tP1\n").unwrap(), vec![edge("R", "P1")]);
        assert!(matches!(rels("A\tB\nB\tA\n"), Err(Error::Cycle(_))));
        let err = rels("A\tB\nC\tC\n").unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
    }

    #[test]
    fn cycle_error_names_the_cycle() {
        let err = rels("A\tB\nB\tC\nC\tA\n").unwrap_err();
        match err {
            Error::Cycle(c) => {
                assert_eq!(c.first(), c.last());
                assert_eq!(c.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_level_toy() {
        let h = PathwayHierarchy::new(
            vec!["g1".into(), "g2".into(), "g3".into()],
            &[set("P1", &["g1", "g2"]), set("P2", &["g3"])],
            vec![edge("R", "P1"), edge("R", "P2")],
        )
        .unwrap();
        assert_eq!(h.level("P1"), Some(1));
        assert_eq!(h.level("P2"), Some(1));
        assert_eq!(h.level("R"), Some(2));
    }

    #[test]
    fn chain_levels() {
        let h = PathwayHierarchy::new(
            vec!["g1".into()],
            &[set("B", &["g1"])],
            vec![edge("R", "A"), edge("A", "B")],
        )
        .unwrap();
        assert_eq!(
            (h.level("B"), h.level("A"), h.level("R")),
            (Some(1), Some(2), Some(3))
        );
    }

    #[test]
    fn diamond_uses_longest_path() {
        let h = PathwayHierarchy::new(
            vec!["g".into()],
            &[set("C", &["g"])],
            vec![edge("R", "A"), edge("R", "B"), edge("A", "C"), edge("B", "C")],
        )
        .unwrap();
        assert_eq!(h.level("C"), Some(1));
        assert_eq!(h.level("A"), Some(2));
        assert_eq!(h.level("B"), Some(2));
        assert_eq!(h.level("R"), Some(3));
    }

    #[test]
    fn empty_pathway_rejected() {
        let err = PathwayHierarchy::new(vec!["g".into()], &[set("E", &[])], vec![]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn levels_ignore_declaration_order() {
        let a = PathwayHierarchy::new(
            vec!["g".into(), "h".into()],
            &[set("C", &["g"]), set("D", &["h"])],
            vec![edge("R", "A"), edge("A", "C"), edge("R", "D")],
        )
        .unwrap();
        let b = PathwayHierarchy::new(
            vec!["g".into(), "h".into()],
            &[set("D", &["h"]), set("C", &["g"])],
            vec![edge("R", "D"), edge("A", "C"), edge("R", "A")],
        )
        .unwrap();
        assert_eq!(a.level_of(), b.level_of());
    }

    #[test]
    fn restriction_drops_unsupported_branches() {
        let h = PathwayHierarchy::new(
            vec!["g1".into()],
            &[set("P1", &["g1"]), set("P2", &["zz"])],
            vec![edge("R", "P1"), edge("Q", "P2")],
        )
        .unwrap();
        let r = h.restrict_to_universe().unwrap();
        assert!(r.pathways().contains_key("P1"));
        assert!(!r.pathways().contains_key("P2"));
        assert!(!r.pathways().contains_key("Q"));
        assert_eq!(r.level("R"), Some(2));
    }
}
