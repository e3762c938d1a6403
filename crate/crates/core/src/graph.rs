//! Directed-graph helpers: Tarjan strongly connected components and
//! reachability, used for chain decompositions and closed-set checks.

/// Strongly connected components in reverse topological order; each
/// component's vertices are sorted ascending. Iterative Tarjan.
pub fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next_index = 0usize;

    // Explicit DFS stack of (vertex, next edge position).
    let mut work: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        work.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut edge)) = work.last_mut() {
            if *edge < adj[v].len() {
                let w = adj[v][*edge];
                *edge += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Components with no edge leaving them (the recurrent classes of a chain
/// whose positive transitions are `adj`). Sorted by smallest vertex.
pub fn closed_sccs(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let comps = tarjan_scc(adj);
    let mut comp_of = vec![usize::MAX; adj.len()];
    for (ci, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    let mut closed: Vec<Vec<usize>> = comps
        .iter()
        .enumerate()
        .filter(|(ci, comp)| {
            comp.iter().all(|&v| adj[v].iter().all(|&w| comp_of[w] == *ci))
        })
        .map(|(_, comp)| comp.clone())
        .collect();
    closed.sort_by_key(|c| c[0]);
    closed
}

pub fn is_strongly_connected(adj: &[Vec<usize>]) -> bool {
    adj.is_empty() || tarjan_scc(adj).len() == 1
}

/// Vertices reachable from `start`, including `start`.
pub fn reachable_from(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = vec![start];
    seen[start] = true;
    while let Some(v) = queue.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push(w);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cycles_with_bridge() {
        // 0 <-> 1, 2 <-> 3, bridge 1 -> 2.
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2]];
        let comps = tarjan_scc(&adj);
        assert_eq!(comps.len(), 2);
        let closed = closed_sccs(&adj);
        assert_eq!(closed, vec![vec![2, 3]]);
        assert!(!is_strongly_connected(&adj));
    }

    #[test]
    fn single_vertex_self_loop() {
        let adj = vec![vec![0]];
        assert!(is_strongly_connected(&adj));
        assert_eq!(closed_sccs(&adj), vec![vec![0]]);
    }

    #[test]
    fn singleton_without_loop_is_open_when_it_leaks() {
        let adj = vec![vec![1], vec![1]];
        let closed = closed_sccs(&adj);
        assert_eq!(closed, vec![vec![1]]);
    }

    #[test]
    fn reachability() {
        let adj = vec![vec![1], vec![], vec![0]];
        let seen = reachable_from(&adj, 2);
        assert_eq!(seen, vec![true, true, true]);
        let seen = reachable_from(&adj, 0);
        assert_eq!(seen, vec![true, true, false]);
    }
}
