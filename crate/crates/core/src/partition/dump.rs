//! Partition dump: `cells.json` (boxes and edge list) plus `members.csv`
//! (`cell_id,index` rows).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HyperRect, PartitionGraph, Partitioning};
use crate::error::{Error, Result};

pub const CELLS_FILE: &str = "cells.json";
pub const MEMBERS_FILE: &str = "members.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub member_count: usize,
    pub oversize_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDump {
    pub dim: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub cells: Vec<CellRecord>,
    pub edges: Vec<[usize; 2]>,
}

impl PartitionDump {
    pub fn new(part: &Partitioning, graph: &PartitionGraph) -> Self {
        PartitionDump {
            dim: part.dim(),
            n_min: part.n_min(),
            n_max: part.n_max(),
            cells: part
                .cells()
                .iter()
                .enumerate()
                .map(|(id, c)| CellRecord {
                    id,
                    lower: c.lower.clone(),
                    upper: c.upper.clone(),
                    member_count: c.len(),
                    oversize_flag: c.oversize,
                })
                .collect(),
            edges: graph.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

pub fn write_partition(dir: &Path, part: &Partitioning, graph: &PartitionGraph) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(CELLS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &PartitionDump::new(part, graph))
        .map_err(|e| Error::json(&path, e))?;

    let path = dir.join(MEMBERS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(dir.join(MEMBERS_FILE), e);
    writeln!(w, "cell_id,index").map_err(io)?;
    for (c, cell) in part.cells().iter().enumerate() {
        for &i in &cell.members {
            writeln!(w, "{c},{i}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_partition(dir: &Path) -> Result<(Partitioning, PartitionGraph)> {
    let path = dir.join(CELLS_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let dump: PartitionDump =
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::json(&path, e))?;

    let mut cells: Vec<HyperRect> = dump
        .cells
        .iter()
        .map(|r| {
            let mut c = HyperRect::new(r.lower.clone(), r.upper.clone());
            c.oversize = r.oversize_flag;
            c
        })
        .collect();
    let path = dir.join(MEMBERS_FILE);
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    for rec in rdr.deserialize::<(usize, usize)>() {
        let (c, i) = rec.map_err(|e| Error::csv(&path, e))?;
        cells
            .get_mut(c)
            .ok_or_else(|| Error::data(format!("member row names unknown cell {c}")))?
            .members
            .push(i);
    }
    for (c, r) in cells.iter().zip(&dump.cells) {
        if c.len() != r.member_count {
            return Err(Error::data(format!(
                "cell {} lists {} members but the dump records {}",
                r.id,
                c.len(),
                r.member_count
            )));
        }
    }
    let edges: Vec<(usize, usize)> = dump.edges.iter().map(|e| (e[0], e[1])).collect();
    if edges.iter().any(|&(i, j)| i >= cells.len() || j >= cells.len()) {
        return Err(Error::data("edge refers to a missing cell"));
    }
    let graph = PartitionGraph::from_edges(cells.len(), &edges);
    let adjacency = (0..cells.len()).map(|i| graph.neighbours(i).to_vec()).collect();
    let mut part = Partitioning::from_parts(dump.dim, cells, adjacency);
    part.n_min = dump.n_min;
    part.n_max = dump.n_max;
    Ok((part, graph))
}
