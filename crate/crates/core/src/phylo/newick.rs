//! Newick serialization with deterministic child ordering.

use super::{PhyloNode, PhyloTree};

pub const DEFAULT_NEWICK_PRECISION: usize = 6;

/// Renders a tree as Newick text with branch lengths, ending in `;`.
///
/// Children are ordered by their smallest leaf label; branch lengths are
/// printed with `precision` significant digits. Labels containing Newick
/// metacharacters or spaces are single-quoted, inner quotes doubled.
pub fn to_newick(tree: &PhyloTree, precision: usize) -> String {
    let mut out = String::new();
    render(&tree.root, tree.root.height(), precision, true, &mut out);
    out.push(';');
    out
}

fn render(node: &PhyloNode, parent_height: f64, precision: usize, is_root: bool, out: &mut String) {
    match node {
        PhyloNode::Leaf { label } => {
            out.push_str(&quote_label(label));
            if !is_root {
                out.push(':');
                out.push_str(&format_sig(parent_height, precision));
            }
        }
        PhyloNode::Internal { height, children } => {
            // min_leaf ordering is established at construction; re-check so
            // hand-built trees serialize canonically too.
            let (first, second) = if children[0].min_leaf() <= children[1].min_leaf() {
                (&children[0], &children[1])
            } else {
                (&children[1], &children[0])
            };
            out.push('(');
            render(first, *height, precision, false, out);
            out.push(',');
            render(second, *height, precision, false, out);
            out.push(')');
            if !is_root {
                out.push(':');
                out.push_str(&format_sig(parent_height - height, precision));
            }
        }
    }
}

fn quote_label(label: &str) -> String {
    let needs_quoting = label
        .chars()
        .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ',' | ':' | ';' | '[' | ']' | '\''));
    if needs_quoting {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

/// Rounds to `digits` significant digits and prints the shortest decimal
/// representation, so whole numbers come out bare ("1" rather than "1.000000").
fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1) as i32;
    let magnitude = value.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - magnitude);
    let rounded = (value * scale).round() / scale;
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(label: &str) -> PhyloNode {
        PhyloNode::Leaf {
            label: label.into(),
        }
    }

    fn internal(height: f64, a: PhyloNode, b: PhyloNode) -> PhyloNode {
        PhyloNode::Internal {
            height,
            children: Box::new([a, b]),
        }
    }

    #[test]
    fn two_leaves_with_unit_branches() {
        let tree = PhyloTree {
            root: internal(1.0, leaf("A"), leaf("B")),
        };
        assert_eq!(to_newick(&tree, DEFAULT_NEWICK_PRECISION), "(A:1,B:1);");
    }

    #[test]
    fn nested_tree_tracks_branch_lengths() {
        let tree = PhyloTree {
            root: internal(
                3.0,
                internal(2.0, internal(1.0, leaf("A"), leaf("B")), leaf("C")),
                leaf("D"),
            ),
        };
        assert_eq!(
            to_newick(&tree, DEFAULT_NEWICK_PRECISION),
            "(((A:1,B:1):1,C:2):1,D:3);"
        );
    }

    #[test]
    fn children_are_ordered_by_smallest_leaf() {
        let tree = PhyloTree {
            root: internal(1.0, leaf("zulu"), leaf("alfa")),
        };
        assert_eq!(to_newick(&tree, DEFAULT_NEWICK_PRECISION), "(alfa:1,zulu:1);");
    }

    #[test]
    fn labels_with_spaces_are_quoted() {
        let tree = PhyloTree {
            root: internal(0.5, leaf("Old English"), leaf("B")),
        };
        assert_eq!(to_newick(&tree, 6), "(B:0.5,'Old English':0.5);");
    }

    #[test]
    fn precision_rounds_significant_digits() {
        let tree = PhyloTree {
            root: internal(1.0 / 3.0, leaf("A"), leaf("B")),
        };
        assert_eq!(to_newick(&tree, 3), "(A:0.333,B:0.333);");
        assert_eq!(to_newick(&tree, 6), "(A:0.333333,B:0.333333);");
    }
}
