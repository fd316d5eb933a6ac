//! Strongly connected components of a dense directed graph (iterative Tarjan).

/// Returns the component index of every node, together with the number of
/// components. Components are numbered in reverse topological order.
pub fn tarjan<F, I>(node_count: usize, mut successors: F) -> (Vec<u32>, usize)
where
    F: FnMut(u32) -> I,
    I: IntoIterator<Item = u32>,
{
    const UNSEEN: u32 = u32::MAX;
    let mut index = vec![UNSEEN; node_count];
    let mut lowlink = vec![0u32; node_count];
    let mut on_stack = vec![false; node_count];
    let mut component = vec![UNSEEN; node_count];
    let mut stack: Vec<u32> = Vec::new();
    let mut next_index = 0u32;
    let mut count = 0usize;

    // Call stack of (node, successors not yet visited).
    let mut frames: Vec<(u32, Vec<u32>)> = Vec::new();

    for root in 0..node_count as u32 {
        if index[root as usize] != UNSEEN {
            continue;
        }
        index[root as usize] = next_index;
        lowlink[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        frames.push((root, successors(root).into_iter().collect()));

        while let Some((v, pending)) = frames.last_mut() {
            let v = *v;
            if let Some(w) = pending.pop() {
                let wi = w as usize;
                if index[wi] == UNSEEN {
                    index[wi] = next_index;
                    lowlink[wi] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[wi] = true;
                    frames.push((w, successors(w).into_iter().collect()));
                } else if on_stack[wi] {
                    lowlink[v as usize] = lowlink[v as usize].min(index[wi]);
                }
                continue;
            }
            frames.pop();
            if let Some((parent, _)) = frames.last() {
                let p = *parent as usize;
                lowlink[p] = lowlink[p].min(lowlink[v as usize]);
            }
            if lowlink[v as usize] == index[v as usize] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    component[w as usize] = count as u32;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    (component, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn components(n: usize, edges: &[(u32, u32)]) -> usize {
        tarjan(n, |v| edges.iter().filter(move |e| e.0 == v).map(|e| e.1).collect::<Vec<_>>()).1
    }

    #[test]
    fn cycle_is_one_component() {
        assert_eq!(components(3, &[(0, 1), (1, 2), (2, 0)]), 1);
    }

    #[test]
    fn chain_is_all_singletons() {
        assert_eq!(components(3, &[(0, 1), (1, 2)]), 3);
    }

    #[test]
    fn two_cycles_joined_one_way() {
        let (comp, n) = tarjan(4, |v| match v {
            0 => vec![1],
            1 => vec![0, 2],
            2 => vec![3],
            3 => vec![2],
            _ => vec![],
        });
        assert_eq!(n, 2);
        assert_eq!(comp[0], comp[1]);
        assert_eq!(comp[2], comp[3]);
        assert_ne!(comp[0], comp[2]);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000u32;
        let (_, count) = tarjan(n as usize, |v| if v + 1 < n { vec![v + 1] } else { vec![0] });
        assert_eq!(count, 1);
    }
}
