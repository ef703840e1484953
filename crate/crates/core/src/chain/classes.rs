use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunicatingClass {
    /// State indices, ascending.
    pub states: Vec<usize>,
    /// No positive-probability edge leaves the class.
    pub recurrent: bool,
}

/// Classes ordered by their smallest state index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    pub classes: Vec<CommunicatingClass>,
}

impl ClassPartition {
    pub fn recurrent(&self) -> impl Iterator<Item = &CommunicatingClass> {
        self.classes.iter().filter(|c| c.recurrent)
    }

    pub fn unique_recurrent(&self) -> Option<&CommunicatingClass> {
        let mut it = self.recurrent();
        match (it.next(), it.next()) {
            (Some(c), None) => Some(c),
            _ => None,
        }
    }

    pub fn is_recurrent(&self, state: usize) -> bool {
        self.recurrent().any(|c| c.states.contains(&state))
    }
}

pub fn communicating_classes(p: &DMatrix<f64>) -> ClassPartition {
    let n = p.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && p[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut component = vec![0usize; n];
    let sccs = tarjan_scc(&g);
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            component[v.index()] = c;
        }
    }
    let mut classes: Vec<CommunicatingClass> = sccs
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let mut states: Vec<usize> = members.iter().map(|v| v.index()).collect();
            states.sort_unstable();
            let recurrent = states
                .iter()
                .all(|&i| (0..n).all(|j| p[(i, j)] <= 0.0 || component[j] == c));
            CommunicatingClass { states, recurrent }
        })
        .collect();
    classes.sort_by_key(|c| c.states[0]);
    ClassPartition { classes }
}
