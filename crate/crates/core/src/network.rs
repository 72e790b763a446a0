//! Typed coupled-cell networks, graph fibrations, and balanced quotients.
//!
//! A network is an ordered list of cells, each with a [`CellType`] and an
//! ordered list of input cells (one per slot). [`Network::assemble`] turns a
//! network into the product [`VectorField`] whose block for cell `c`
//! evaluates that cell's dynamics on `(own state, input states in slot
//! order)`.
//!
//! A [`Fibration`] is a cell map `psi` from the cells of the target network
//! to the cells of the source network that preserves types and input slots;
//! it induces a coordinate-duplicating linear map from the source phase
//! space to the target phase space. Input slots are ordered: the fibration
//! condition is slot-wise equality, not equality up to permutation of
//! inputs. Validation flags the cells where only a permutation-tolerant rule
//! would have passed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr, ParseError};
use crate::vecfield::{AffineMap, FieldError, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("type `{type_name}` declares dimension {dim} but {got} dynamics component(s)")]
    DynamicsCount {
        type_name: String,
        dim: usize,
        got: usize,
    },
    #[error("type `{type_name}` component {component}: {source}")]
    DynamicsParse {
        type_name: String,
        component: usize,
        source: ParseError,
    },
    #[error("cell {cell} references unknown type `{type_name}`")]
    UnknownType { cell: usize, type_name: String },
    #[error("cell {cell} has type index {index} but only {count} types exist")]
    TypeIndexRange {
        cell: usize,
        index: usize,
        count: usize,
    },
    #[error("expected one input list per cell ({cells}), got {got}")]
    InputListCount { cells: usize, got: usize },
    #[error("cell {cell} has arity {arity} but {got} input(s)")]
    ArityMismatch {
        cell: usize,
        arity: usize,
        got: usize,
    },
    #[error("cell {cell}, slot {slot}: input id {id} is out of range ({cells} cells)")]
    InputRange {
        cell: usize,
        slot: usize,
        id: usize,
        cells: usize,
    },
    #[error(
        "type `{type_name}`, slot {slot}: cell {cell_a} feeds it a state of dimension {dim_a} \
         but cell {cell_b} one of dimension {dim_b}"
    )]
    SlotDimConflict {
        type_name: String,
        slot: usize,
        cell_a: usize,
        dim_a: usize,
        cell_b: usize,
        dim_b: usize,
    },
    #[error(
        "type `{type_name}` references x{var} but cells of this type receive only {available} \
         argument value(s)"
    )]
    DynamicsArity {
        type_name: String,
        var: usize,
        available: usize,
    },
    #[error("psi must assign every target cell: expected {expected} entries, got {got}")]
    PsiLength { expected: usize, got: usize },
    #[error("psi maps target cell {cell} to {id}, but the source has {cells} cells")]
    PsiRange { cell: usize, id: usize, cells: usize },
    #[error("fibration is invalid: {first}")]
    InvalidFibration { first: String },
    #[error("partition must assign every cell: expected {expected} entries, got {got}")]
    PartitionLength { expected: usize, got: usize },
    #[error("partition is not balanced: cells {cell_a} and {cell_b} share a class but {reason}")]
    Unbalanced {
        cell_a: usize,
        cell_b: usize,
        reason: String,
    },
}

/// A cell type: state dimension, input arity, and the dynamics expressions.
///
/// Dynamics are written over `x1..` with the cell's own state first and the
/// input states following in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellType {
    pub name: String,
    pub dim: usize,
    pub arity: usize,
    pub dynamics: Vec<Expr>,
}

impl CellType {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        arity: usize,
        dynamics: &[&str],
    ) -> Result<CellType, NetworkError> {
        let name = name.into();
        if dynamics.len() != dim {
            return Err(NetworkError::DynamicsCount {
                type_name: name,
                dim,
                got: dynamics.len(),
            });
        }
        let mut parsed = Vec::with_capacity(dim);
        for (component, src) in dynamics.iter().enumerate() {
            let e = expr::parse(src).map_err(|source| NetworkError::DynamicsParse {
                type_name: name.clone(),
                component,
                source,
            })?;
            parsed.push(e);
        }
        Ok(CellType {
            name,
            dim,
            arity,
            dynamics: parsed,
        })
    }
}

/// A coupled-cell network with ordered input slots. Self-loops are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    types: Vec<CellType>,
    cells: Vec<usize>,
    inputs: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(
        types: Vec<CellType>,
        cells: Vec<usize>,
        inputs: Vec<Vec<usize>>,
    ) -> Result<Network, NetworkError> {
        for (cell, &t) in cells.iter().enumerate() {
            if t >= types.len() {
                return Err(NetworkError::TypeIndexRange {
                    cell,
                    index: t,
                    count: types.len(),
                });
            }
        }
        if inputs.len() != cells.len() {
            return Err(NetworkError::InputListCount {
                cells: cells.len(),
                got: inputs.len(),
            });
        }
        for (cell, ins) in inputs.iter().enumerate() {
            let arity = types[cells[cell]].arity;
            if ins.len() != arity {
                return Err(NetworkError::ArityMismatch {
                    cell,
                    arity,
                    got: ins.len(),
                });
            }
            for (slot, &id) in ins.iter().enumerate() {
                if id >= cells.len() {
                    return Err(NetworkError::InputRange {
                        cell,
                        slot,
                        id,
                        cells: cells.len(),
                    });
                }
            }
        }
        Ok(Network {
            types,
            cells,
            inputs,
        })
    }

    pub fn from_config(config: &NetworkConfig) -> Result<Network, NetworkError> {
        let mut types = Vec::with_capacity(config.types.len());
        for t in &config.types {
            let dynamics: Vec<&str> = t.dynamics.iter().map(String::as_str).collect();
            types.push(CellType::new(t.name.clone(), t.dim, t.arity, &dynamics)?);
        }
        let mut cells = Vec::with_capacity(config.cells.len());
        for (cell, c) in config.cells.iter().enumerate() {
            let index = types
                .iter()
                .position(|t| t.name == c.type_name)
                .ok_or_else(|| NetworkError::UnknownType {
                    cell,
                    type_name: c.type_name.clone(),
                })?;
            cells.push(index);
        }
        Network::new(types, cells, config.inputs.clone())
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_type(&self, cell: usize) -> &CellType {
        &self.types[self.cells[cell]]
    }

    pub fn inputs(&self, cell: usize) -> &[usize] {
        &self.inputs[cell]
    }

    /// Total phase-space dimension: the sum of the cell state dimensions.
    pub fn state_dim(&self) -> usize {
        self.cells.iter().map(|&t| self.types[t].dim).sum()
    }

    /// Offset of each cell's block in the phase-space coordinates.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.cells.len());
        let mut acc = 0;
        for &t in &self.cells {
            offsets.push(acc);
            acc += self.types[t].dim;
        }
        offsets
    }

    // Checks that cells of one type agree on the state dimension fed into
    // each slot, and that the dynamics never reference a variable past the
    // arguments actually supplied.
    fn check_dynamics_wiring(&self) -> Result<(), NetworkError> {
        let mut slot_dims: Vec<Option<(usize, Vec<usize>)>> = vec![None; self.types.len()];
        for (cell, &t) in self.cells.iter().enumerate() {
            let dims: Vec<usize> = self.inputs[cell]
                .iter()
                .map(|&src| self.cell_type(src).dim)
                .collect();
            match &slot_dims[t] {
                None => slot_dims[t] = Some((cell, dims)),
                Some((first_cell, first_dims)) => {
                    if first_dims != &dims {
                        let slot = first_dims
                            .iter()
                            .zip(dims.iter())
                            .position(|(a, b)| a != b)
                            .unwrap_or(0);
                        return Err(NetworkError::SlotDimConflict {
                            type_name: self.types[t].name.clone(),
                            slot,
                            cell_a: *first_cell,
                            dim_a: first_dims[slot],
                            cell_b: cell,
                            dim_b: dims[slot],
                        });
                    }
                }
            }
        }
        for (t, usage) in slot_dims.iter().enumerate() {
            if let Some((_, dims)) = usage {
                let available = self.types[t].dim + dims.iter().sum::<usize>();
                for e in &self.types[t].dynamics {
                    if let Some(max) = e.max_var() {
                        if max >= available {
                            return Err(NetworkError::DynamicsArity {
                                type_name: self.types[t].name.clone(),
                                var: max + 1,
                                available,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds the network vector field.
    ///
    /// The block for cell `c` evaluates `w_{type(c)}(x_c, x_{in_1(c)}, ...)`;
    /// blocks are laid out in cell order.
    pub fn assemble(&self) -> Result<VectorField, NetworkError> {
        self.check_dynamics_wiring()?;
        let net = self.clone();
        let offsets = self.offsets();
        let dim = self.state_dim();
        Ok(VectorField::from_fn(dim, move |x| {
            let mut out = Vec::with_capacity(x.len());
            for cell in 0..net.n_cells() {
                let ty = net.cell_type(cell);
                let mut args =
                    Vec::with_capacity(ty.dim + net.inputs[cell].len());
                args.extend_from_slice(&x[offsets[cell]..offsets[cell] + ty.dim]);
                for &src in &net.inputs[cell] {
                    let d = net.cell_type(src).dim;
                    args.extend_from_slice(&x[offsets[src]..offsets[src] + d]);
                }
                for e in &ty.dynamics {
                    let v = e
                        .eval(&args)
                        .map_err(|source| FieldError::Cell { cell, source })?;
                    out.push(v);
                }
            }
            Ok(out)
        }))
    }
}

/// Serialized network:
/// `{"types": [{"name", "dim", "arity", "dynamics": [..]}], "cells": [{"type": name}], "inputs": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub types: Vec<CellTypeConfig>,
    pub cells: Vec<CellConfig>,
    pub inputs: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellTypeConfig {
    pub name: String,
    pub dim: usize,
    pub arity: usize,
    pub dynamics: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    #[serde(rename = "type")]
    pub type_name: String,
}

/// Serialized fibration: `{"psi": [source cell id for each target cell]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibrationConfig {
    pub psi: Vec<usize>,
}

/// A cell map between networks, oriented so the induced phase-space map goes
/// from the source's phase space to the target's: `psi[c]` is the source
/// cell that target cell `c` duplicates.
#[derive(Debug, Clone)]
pub struct Fibration {
    source: Network,
    target: Network,
    psi: Vec<usize>,
}

/// One reason a cell map fails to be a fibration.
#[derive(Debug, Clone, PartialEq)]
pub enum FibrationViolation {
    TypeMismatch {
        cell: usize,
        target_type: String,
        source_type: String,
    },
    SlotMismatch {
        cell: usize,
        slot: usize,
        expected: usize,
        found: usize,
        /// True when the images of the cell's inputs match the required
        /// inputs as a multiset, so a permutation-tolerant rule would have
        /// accepted this cell.
        permutation_only: bool,
    },
}

impl std::fmt::Display for FibrationViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FibrationViolation::TypeMismatch {
                cell,
                target_type,
                source_type,
            } => write!(
                f,
                "cell {cell}: type `{target_type}` does not match image type `{source_type}`"
            ),
            FibrationViolation::SlotMismatch {
                cell,
                slot,
                expected,
                found,
                permutation_only,
            } => {
                write!(
                    f,
                    "cell {cell}, slot {slot}: psi(in_{slot}) = {found}, \
                     but the image cell's slot {slot} reads {expected}"
                )?;
                if *permutation_only {
                    write!(f, " (inputs agree up to permutation of slots)")?;
                }
                Ok(())
            }
        }
    }
}

/// Verdict of [`Fibration::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FibrationReport {
    pub violations: Vec<FibrationViolation>,
}

impl FibrationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Fibration {
    /// `psi` must assign a source cell to every target cell.
    pub fn new(source: Network, target: Network, psi: Vec<usize>) -> Result<Fibration, NetworkError> {
        if psi.len() != target.n_cells() {
            return Err(NetworkError::PsiLength {
                expected: target.n_cells(),
                got: psi.len(),
            });
        }
        for (cell, &id) in psi.iter().enumerate() {
            if id >= source.n_cells() {
                return Err(NetworkError::PsiRange {
                    cell,
                    id,
                    cells: source.n_cells(),
                });
            }
        }
        Ok(Fibration {
            source,
            target,
            psi,
        })
    }

    pub fn source(&self) -> &Network {
        &self.source
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn psi(&self) -> &[usize] {
        &self.psi
    }

    /// Checks type preservation and slot-wise input preservation at every
    /// target cell.
    pub fn validate(&self) -> FibrationReport {
        let mut violations = Vec::new();
        for cell in 0..self.target.n_cells() {
            let image = self.psi[cell];
            let target_type = self.target.cell_type(cell);
            let source_type = self.source.cell_type(image);
            if target_type != source_type {
                violations.push(FibrationViolation::TypeMismatch {
                    cell,
                    target_type: target_type.name.clone(),
                    source_type: source_type.name.clone(),
                });
                continue;
            }
            let required = self.source.inputs(image);
            let mapped: Vec<usize> = self
                .target
                .inputs(cell)
                .iter()
                .map(|&i| self.psi[i])
                .collect();
            if mapped != required {
                let mut sorted_mapped = mapped.clone();
                let mut sorted_required = required.to_vec();
                sorted_mapped.sort_unstable();
                sorted_required.sort_unstable();
                let permutation_only = sorted_mapped == sorted_required;
                for (slot, (&found, &expected)) in
                    mapped.iter().zip(required.iter()).enumerate()
                {
                    if found != expected {
                        violations.push(FibrationViolation::SlotMismatch {
                            cell,
                            slot,
                            expected,
                            found,
                            permutation_only,
                        });
                    }
                }
            }
        }
        FibrationReport { violations }
    }

    /// The linear duplication map induced by a valid fibration: the block of
    /// the output for target cell `c` is the source block of `psi[c]`.
    pub fn induced_map(&self) -> Result<AffineMap, NetworkError> {
        let report = self.validate();
        if let Some(first) = report.violations.first() {
            return Err(NetworkError::InvalidFibration {
                first: first.to_string(),
            });
        }
        let source_offsets = self.source.offsets();
        let target_offsets = self.target.offsets();
        let mut l = vec![vec![0.0; self.source.state_dim()]; self.target.state_dim()];
        for cell in 0..self.target.n_cells() {
            let dim = self.target.cell_type(cell).dim;
            let to = target_offsets[cell];
            let so = source_offsets[self.psi[cell]];
            for k in 0..dim {
                l[to + k][so + k] = 1.0;
            }
        }
        let p = vec![0.0; self.target.state_dim()];
        Ok(AffineMap::new(l, p).expect("induced map dimensions are consistent"))
    }
}

/// Assignment of each cell to a class id.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub classes: Vec<usize>,
}

impl Partition {
    pub fn new(classes: Vec<usize>) -> Partition {
        Partition { classes }
    }
}

fn check_balanced(network: &Network, partition: &Partition) -> Result<(), NetworkError> {
    if partition.classes.len() != network.n_cells() {
        return Err(NetworkError::PartitionLength {
            expected: network.n_cells(),
            got: partition.classes.len(),
        });
    }
    // compare each cell against the first cell seen in its class
    let mut reps: Vec<(usize, usize)> = Vec::new(); // (class, representative)
    for cell in 0..network.n_cells() {
        let class = partition.classes[cell];
        match reps.iter().find(|(c, _)| *c == class) {
            None => reps.push((class, cell)),
            Some(&(_, rep)) => {
                if network.cell_type(rep) != network.cell_type(cell) {
                    return Err(NetworkError::Unbalanced {
                        cell_a: rep,
                        cell_b: cell,
                        reason: format!(
                            "their types differ (`{}` vs `{}`)",
                            network.cell_type(rep).name,
                            network.cell_type(cell).name
                        ),
                    });
                }
                for (slot, (&a, &b)) in network
                    .inputs(rep)
                    .iter()
                    .zip(network.inputs(cell).iter())
                    .enumerate()
                {
                    if partition.classes[a] != partition.classes[b] {
                        return Err(NetworkError::Unbalanced {
                            cell_a: rep,
                            cell_b: cell,
                            reason: format!(
                                "slot {slot} reads classes {} and {}",
                                partition.classes[a], partition.classes[b]
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Collapses a balanced partition to its quotient network, together with the
/// duplication map embedding the quotient phase space onto the polydiagonal
/// of the original network.
pub fn quotient(
    network: &Network,
    partition: &Partition,
) -> Result<(Network, AffineMap), NetworkError> {
    check_balanced(network, partition)?;
    // relabel classes in order of first appearance
    let mut class_order: Vec<usize> = Vec::new();
    for &c in &partition.classes {
        if !class_order.contains(&c) {
            class_order.push(c);
        }
    }
    let class_index = |c: usize| class_order.iter().position(|&x| x == c).unwrap();

    let mut q_cells = Vec::with_capacity(class_order.len());
    let mut q_inputs = Vec::with_capacity(class_order.len());
    for &class in &class_order {
        let rep = partition
            .classes
            .iter()
            .position(|&c| c == class)
            .expect("class has a representative");
        q_cells.push(network.cells[rep]);
        q_inputs.push(
            network
                .inputs(rep)
                .iter()
                .map(|&src| class_index(partition.classes[src]))
                .collect(),
        );
    }
    let quotient_net = Network::new(network.types.clone(), q_cells, q_inputs)?;

    let q_offsets = quotient_net.offsets();
    let offsets = network.offsets();
    let mut l = vec![vec![0.0; quotient_net.state_dim()]; network.state_dim()];
    for cell in 0..network.n_cells() {
        let dim = network.cell_type(cell).dim;
        let ro = offsets[cell];
        let co = q_offsets[class_index(partition.classes[cell])];
        for k in 0..dim {
            l[ro + k][co + k] = 1.0;
        }
    }
    let p = vec![0.0; network.state_dim()];
    let map = AffineMap::new(l, p).expect("quotient map dimensions are consistent");
    Ok((quotient_net, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecfield::continuous_residual;

    // the three-cell chain: w1 feeds w2 twice, w2 feeds w3
    pub(crate) fn chain_network() -> Network {
        let types = vec![
            CellType::new("w1", 1, 0, &["x1"]).unwrap(),
            CellType::new("w2", 1, 2, &["sin(x2)*x3/x1"]).unwrap(),
            CellType::new("w3", 1, 1, &["x2*x1"]).unwrap(),
        ];
        Network::new(types, vec![0, 1, 2], vec![vec![], vec![0, 0], vec![1]]).unwrap()
    }

    // two copies of w1 both feeding one w2 cell
    pub(crate) fn doubled_network() -> Network {
        let types = vec![
            CellType::new("w1", 1, 0, &["x1"]).unwrap(),
            CellType::new("w2", 1, 2, &["sin(x2)*x3/x1"]).unwrap(),
            CellType::new("w3", 1, 1, &["x2*x1"]).unwrap(),
        ];
        Network::new(types, vec![0, 0, 1], vec![vec![], vec![], vec![0, 1]]).unwrap()
    }

    pub(crate) fn chain_fibration() -> Fibration {
        Fibration::new(chain_network(), doubled_network(), vec![0, 0, 1]).unwrap()
    }

    #[test]
    fn assemble_chain_network() {
        let x = chain_network().assemble().unwrap();
        let v = x.eval(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], (1.0f64.sin() * 1.0) / 2.0);
        assert_eq!(v[2], 6.0);
        assert!((v[1] - 0.4207355).abs() < 1e-7);
    }

    #[test]
    fn assemble_doubled_network() {
        let y = doubled_network().assemble().unwrap();
        let v = y.eval(&[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 1.0);
        assert_eq!(v[2], (1.0f64.sin() * 1.0) / 3.0);
    }

    #[test]
    fn single_cell_network_assembles_to_its_dynamics() {
        let types = vec![CellType::new("decay", 1, 0, &["-3*x1"]).unwrap()];
        let net = Network::new(types, vec![0], vec![vec![]]).unwrap();
        let field = net.assemble().unwrap();
        assert_eq!(field.eval(&[2.0]).unwrap(), vec![-6.0]);
    }

    #[test]
    fn chain_fibration_validates() {
        let report = chain_fibration().validate();
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn identity_fibration_validates() {
        for net in [chain_network(), doubled_network()] {
            let n = net.n_cells();
            let f = Fibration::new(net.clone(), net, (0..n).collect()).unwrap();
            assert!(f.validate().is_valid());
        }
    }

    #[test]
    fn type_mutation_is_rejected_with_the_cell() {
        // map the w2 cell to the w3 cell instead
        let f = Fibration::new(chain_network(), doubled_network(), vec![0, 0, 2]).unwrap();
        let report = f.validate();
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            FibrationViolation::TypeMismatch {
                cell,
                target_type,
                source_type,
            } => {
                assert_eq!(*cell, 2);
                assert_eq!(target_type, "w2");
                assert_eq!(source_type, "w3");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn induced_map_duplicates_coordinates() {
        let f = chain_fibration();
        let map = f.induced_map().unwrap();
        assert_eq!(
            map.matrix(),
            &[
                vec![1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
            ]
        );
        assert!(map.is_linear());
        assert_eq!(map.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn induced_map_of_identity_is_identity() {
        let net = chain_network();
        let n = net.n_cells();
        let f = Fibration::new(net.clone(), net, (0..n).collect()).unwrap();
        assert_eq!(f.induced_map().unwrap(), AffineMap::identity(3));
    }

    #[test]
    fn two_target_cells_over_one_source_cell_give_the_diagonal() {
        let types = vec![CellType::new("decay", 1, 0, &["-3*x1"]).unwrap()];
        let source = Network::new(types.clone(), vec![0], vec![vec![]]).unwrap();
        let target = Network::new(types, vec![0, 0], vec![vec![], vec![]]).unwrap();
        let f = Fibration::new(source, target, vec![0, 0]).unwrap();
        let map = f.induced_map().unwrap();
        assert_eq!(map.apply(&[0.7]).unwrap(), vec![0.7, 0.7]);
    }

    #[test]
    fn invalid_fibration_has_no_induced_map() {
        let f = Fibration::new(chain_network(), doubled_network(), vec![0, 0, 2]).unwrap();
        assert!(matches!(
            f.induced_map(),
            Err(NetworkError::InvalidFibration { .. })
        ));
    }

    #[test]
    fn fibration_relates_the_assembled_fields() {
        let f = chain_fibration();
        let map = f.induced_map().unwrap();
        let x_field = f.source().assemble().unwrap();
        let y_field = f.target().assemble().unwrap();
        for x in [[1.0, 2.0, 3.0], [0.5, -1.5, 2.5], [3.0, 0.25, -4.0]] {
            let r = continuous_residual(&map, &x_field, &y_field, &x).unwrap();
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn permutation_only_slot_mismatch_is_flagged() {
        // source w2 cell reads (a, b); target w2 cell reads them swapped
        let types = vec![
            CellType::new("u", 1, 0, &["x1"]).unwrap(),
            CellType::new("v", 1, 0, &["2*x1"]).unwrap(),
            CellType::new("w", 1, 2, &["x2 - x3"]).unwrap(),
        ];
        let source = Network::new(
            types.clone(),
            vec![0, 1, 2],
            vec![vec![], vec![], vec![0, 1]],
        )
        .unwrap();
        let target = Network::new(
            types,
            vec![0, 1, 2],
            vec![vec![], vec![], vec![1, 0]],
        )
        .unwrap();
        let f = Fibration::new(source, target, vec![0, 1, 2]).unwrap();
        let report = f.validate();
        assert!(!report.is_valid());
        assert!(report.violations.iter().all(|v| matches!(
            v,
            FibrationViolation::SlotMismatch {
                permutation_only: true,
                ..
            }
        )));
    }

    #[test]
    fn quotient_of_two_identical_uncoupled_cells() {
        let types = vec![CellType::new("decay", 1, 0, &["-3*x1"]).unwrap()];
        let net = Network::new(types, vec![0, 0], vec![vec![], vec![]]).unwrap();
        let (q, map) = quotient(&net, &Partition::new(vec![0, 0])).unwrap();
        assert_eq!(q.n_cells(), 1);
        assert_eq!(map.apply(&[0.7]).unwrap(), vec![0.7, 0.7]);
    }

    #[test]
    fn quotient_of_the_doubled_network_collapses_the_pair() {
        let net = doubled_network();
        let (q, map) = quotient(&net, &Partition::new(vec![0, 0, 1])).unwrap();
        assert_eq!(q.n_cells(), 2);
        assert_eq!(q.cell_type(0).name, "w1");
        assert_eq!(q.cell_type(1).name, "w2");
        assert_eq!(q.inputs(1), &[0, 0]);
        assert_eq!(
            map.matrix(),
            &[
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
            ]
        );
    }

    #[test]
    fn quotient_map_agrees_with_the_projection_fibration() {
        let net = doubled_network();
        let partition = Partition::new(vec![0, 0, 1]);
        let (q, map) = quotient(&net, &partition).unwrap();
        let projection = Fibration::new(q, net, partition.classes).unwrap();
        assert!(projection.validate().is_valid());
        assert_eq!(projection.induced_map().unwrap(), map);
    }

    #[test]
    fn mixed_type_class_is_unbalanced() {
        let net = chain_network();
        let err = quotient(&net, &Partition::new(vec![0, 0, 1])).unwrap_err();
        match err {
            NetworkError::Unbalanced { cell_a: 0, cell_b: 1, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbalanced_inputs_are_detected() {
        // two w2 cells whose inputs land in different classes
        let types = vec![
            CellType::new("w1", 1, 0, &["x1"]).unwrap(),
            CellType::new("w2", 1, 1, &["x2/x1"]).unwrap(),
        ];
        let net = Network::new(
            types,
            vec![0, 0, 1, 1],
            vec![vec![], vec![], vec![0], vec![3]],
        )
        .unwrap();
        // cells 2 and 3 share a class, but cell 2 reads class 0 and cell 3
        // reads class 1
        let err = quotient(&net, &Partition::new(vec![0, 0, 1, 1])).unwrap_err();
        assert!(matches!(err, NetworkError::Unbalanced { cell_a: 2, cell_b: 3, .. }));
    }

    #[test]
    fn wiring_errors_are_reported() {
        let types = vec![
            CellType::new("w1", 1, 0, &["x1"]).unwrap(),
            CellType::new("w2", 1, 2, &["sin(x2)*x3/x1"]).unwrap(),
        ];
        assert!(matches!(
            Network::new(types.clone(), vec![0, 1], vec![vec![], vec![0]]),
            Err(NetworkError::ArityMismatch { cell: 1, arity: 2, got: 1 })
        ));
        assert!(matches!(
            Network::new(types.clone(), vec![0, 1], vec![vec![], vec![0, 5]]),
            Err(NetworkError::InputRange { cell: 1, slot: 1, id: 5, .. })
        ));
        assert!(matches!(
            Network::new(types, vec![0, 3], vec![vec![], vec![]]),
            Err(NetworkError::TypeIndexRange { cell: 1, index: 3, .. })
        ));
    }

    #[test]
    fn dynamics_referencing_missing_arguments_fail_at_assembly() {
        // arity 1 but the dynamics reference x3
        let types = vec![
            CellType::new("w1", 1, 0, &["x1"]).unwrap(),
            CellType::new("bad", 1, 1, &["x3"]).unwrap(),
        ];
        let net = Network::new(types, vec![0, 1], vec![vec![], vec![0]]).unwrap();
        assert!(matches!(
            net.assemble(),
            Err(NetworkError::DynamicsArity { var: 3, available: 2, .. })
        ));
    }

    #[test]
    fn network_config_round_trip() {
        let json = r#"{
            "types": [
                {"name": "w1", "dim": 1, "arity": 0, "dynamics": ["x1"]},
                {"name": "w2", "dim": 1, "arity": 2, "dynamics": ["sin(x2)*x3/x1"]},
                {"name": "w3", "dim": 1, "arity": 1, "dynamics": ["x2*x1"]}
            ],
            "cells": [{"type": "w1"}, {"type": "w2"}, {"type": "w3"}],
            "inputs": [[], [0, 0], [1]]
        }"#;
        let config: NetworkConfig = serde_json::from_str(json).unwrap();
        let net = Network::from_config(&config).unwrap();
        assert_eq!(net, chain_network());
    }
}
