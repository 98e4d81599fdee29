//! Line-oriented file formats: functions.jsonl in, JSONL/CSV artifacts out.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Map, Value};
use strandforge_core::cfg::{build_function, to_raw, FunctionCfg, RawBlock, RawFunction};

use crate::error::{CliError, Result};

fn field<'a>(obj: &'a Map<String, Value>, name: &str, line: usize, path: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| CliError::Schema { line, field: format!("{}{}", path, name) })
}

fn string(v: &Value, line: usize, path: &str) -> Result<String> {
    v.as_str().map(str::to_string).ok_or_else(|| CliError::Schema { line, field: path.into() })
}

fn opt_string(obj: &Map<String, Value>, name: &str, line: usize) -> Result<Option<String>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => string(v, line, name).map(Some),
    }
}

fn parse_addr(s: &str) -> Option<u64> {
    let t = s.trim();
    let hex = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    u64::from_str_radix(hex, 16).ok()
}

/// One functions.jsonl line to the raw (unparsed) form; `line` is 1-based.
pub fn parse_function_line(text: &str, line: usize) -> Result<RawFunction> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Json { line, detail: e.to_string() })?;
    let obj = v.as_object().ok_or_else(|| CliError::Schema { line, field: "<root>".into() })?;
    let function_id = string(field(obj, "function_id", line, "")?, line, "function_id")?;
    let binary_id = string(field(obj, "binary_id", line, "")?, line, "binary_id")?;
    let compiler = opt_string(obj, "compiler", line)?;
    let optimization = opt_string(obj, "optimization", line)?;
    let mut libc_symbols = BTreeMap::new();
    match obj.get("libc_symbols") {
        None | Some(Value::Null) => {}
        Some(Value::Object(m)) => {
            for (k, name) in m {
                let path = format!("libc_symbols.{}", k);
                let addr = parse_addr(k).ok_or_else(|| CliError::Schema { line, field: path.clone() })?;
                libc_symbols.insert(addr, string(name, line, &path)?);
            }
        }
        Some(_) => return Err(CliError::Schema { line, field: "libc_symbols".into() }),
    }
    let blocks_v = field(obj, "blocks", line, "")?
        .as_array()
        .ok_or_else(|| CliError::Schema { line, field: "blocks".into() })?;
    let mut blocks = Vec::with_capacity(blocks_v.len());
    for (bi, b) in blocks_v.iter().enumerate() {
        let bp = format!("blocks[{}].", bi);
        let bo = b.as_object().ok_or_else(|| CliError::Schema { line, field: format!("blocks[{}]", bi) })?;
        let block_id = string(field(bo, "block_id", line, &bp)?, line, &format!("{}block_id", bp))?;
        let successors = match bo.get("successors") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(si, s)| string(s, line, &format!("{}successors[{}]", bp, si)))
                .collect::<Result<_>>()?,
            Some(_) => return Err(CliError::Schema { line, field: format!("{}successors", bp) }),
        };
        let instrs = field(bo, "instructions", line, &bp)?
            .as_array()
            .ok_or_else(|| CliError::Schema { line, field: format!("{}instructions", bp) })?;
        let mut instructions = Vec::with_capacity(instrs.len());
        for (ii, ins) in instrs.iter().enumerate() {
            let ip = format!("{}instructions[{}].", bp, ii);
            let io = ins.as_object().ok_or_else(|| CliError::Schema { line, field: format!("{}instructions[{}]", bp, ii) })?;
            let addr_s = string(field(io, "addr", line, &ip)?, line, &format!("{}addr", ip))?;
            let addr = parse_addr(&addr_s).ok_or_else(|| CliError::Schema { line, field: format!("{}addr", ip) })?;
            let text = string(field(io, "text", line, &ip)?, line, &format!("{}text", ip))?;
            instructions.push((addr, text));
        }
        blocks.push(RawBlock { block_id, successors, instructions });
    }
    Ok(RawFunction { function_id, binary_id, compiler, optimization, libc_symbols, blocks })
}

pub fn function_to_json(raw: &RawFunction) -> Value {
    let mut v = json!({
        "function_id": raw.function_id,
        "binary_id": raw.binary_id,
        "libc_symbols": raw.libc_symbols.iter().map(|(a, n)| (format!("{:#x}", a), json!(n))).collect::<Map<_, _>>(),
        "blocks": raw.blocks.iter().map(|b| json!({
            "block_id": b.block_id,
            "successors": b.successors,
            "instructions": b.instructions.iter().map(|(a, t)| json!({"addr": format!("{:#x}", a), "text": t})).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    if let Some(c) = &raw.compiler {
        v["compiler"] = json!(c);
    }
    if let Some(o) = &raw.optimization {
        v["optimization"] = json!(o);
    }
    v
}

/// Counts of unsupported mnemonics seen while loading.
pub type UnsupportedCounts = BTreeMap<String, usize>;

/// Parses and validates every function in file order.
pub fn load_functions(path: &Path) -> Result<(Vec<FunctionCfg>, UnsupportedCounts)> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    let mut unsupported = UnsupportedCounts::new();
    for (i, l) in BufReader::new(file).lines().enumerate() {
        let l = l.map_err(|e| CliError::io(path, e))?;
        if l.trim().is_empty() {
            continue;
        }
        let raw = parse_function_line(&l, i + 1)?;
        let f = build_function(&raw).map_err(|source| CliError::Cfg { line: i + 1, source })?;
        for ins in f.blocks.iter().flat_map(|b| &b.instructions) {
            if !ins.supported() {
                *unsupported.entry(ins.mnemonic.clone()).or_default() += 1;
            }
        }
        out.push(f);
    }
    Ok((out, unsupported))
}

pub fn functions_jsonl(fs_: &[FunctionCfg]) -> String {
    let mut s = String::new();
    for f in fs_ {
        s.push_str(&function_to_json(&to_raw(f)).to_string());
        s.push('\n');
    }
    s
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(contents).map_err(|e| CliError::io(path, e))
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).expect("serializable row"));
        s.push('\n');
    }
    s
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.into()));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Json { line: i + 1, detail: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrandRow {
    pub strand_id: String,
    pub function_id: String,
    pub block_id: String,
    /// `value:<location>`, `predicate:<index>` or `call:<index>`.
    pub role: String,
    pub indices: Vec<u32>,
    pub executable: bool,
    pub asm: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymRow {
    pub strand_id: String,
    /// Printed assignments, as produced by the engine.
    pub assigns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnexecutableRow {
    pub strand_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub strand_id: String,
    pub asm: Vec<String>,
    pub symexprs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsmRow {
    pub strand_id: String,
    pub asm: Vec<String>,
    pub symexpr: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElmRow {
    pub strand_id: String,
    pub input_ids: Vec<u32>,
    pub language_ids: Vec<u32>,
    /// Original id at masked positions, -1 elsewhere.
    pub labels: Vec<i32>,
    pub ssm_label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecRow {
    pub strand_id: String,
    pub asm: Vec<String>,
    /// `(location, value)` in first-read order.
    pub inputs: Vec<(String, u64)>,
    pub query: Option<String>,
    pub label: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRow {
    pub id: String,
    pub strands: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub a: UnitRow,
    pub b: UnitRow,
    pub label: i8,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRow {
    pub strand_id: String,
    pub function_id: String,
    pub block_id: String,
    pub family: usize,
    /// Source lines the strand was sliced from.
    pub code: Vec<String>,
    pub asm: Vec<String>,
    pub assigns: Vec<String>,
}

/// `task,split,metric,k,value,seed` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub task: String,
    pub split: String,
    pub metric: String,
    pub k: Option<usize>,
    pub value: f64,
    pub seed: u64,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("task,split,metric,k,value,seed\n");
    for r in rows {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{:.6},{}\n", r.task, r.split, r.metric, k, r.value, r.seed));
    }
    s
}

pub fn embeddings_csv(rows: &[(String, String, Vec<f32>)]) -> String {
    let dim = rows.first().map(|r| r.2.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "group".to_string()];
    header.extend((0..dim).map(|i| format!("v{}", i)));
    w.write_record(&header).expect("in-memory write");
    for (id, group, v) in rows {
        let mut rec = vec![id.clone(), group.clone()];
        rec.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Reads `embeddings_csv` output back; floats round-trip exactly.
pub fn read_embeddings(path: &Path) -> Result<Vec<(String, String, Vec<f32>)>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.into()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Json { line: 0, detail: e.to_string() })?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Json { line, detail: e.to_string() })?;
        let id = rec.get(0).ok_or_else(|| CliError::Schema { line, field: "id".into() })?.to_string();
        let group = rec.get(1).ok_or_else(|| CliError::Schema { line, field: "group".into() })?.to_string();
        let v = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(j, x)| x.parse::<f32>().map_err(|_| CliError::Schema { line, field: format!("v{}", j) }))
            .collect::<Result<Vec<f32>>>()?;
        out.push((id, group, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"function_id":"main","binary_id":"bin","compiler":"gcc-9","optimization":"O2","libc_symbols":{"0x400520":"fprintf"},"blocks":[{"block_id":"b0","successors":["b1"],"instructions":[{"addr":"0x1000","text":"mov esi, 0x4006f4"},{"addr":"0x1005","text":"call 0x400520"}]},{"block_id":"b1","successors":[],"instructions":[{"addr":"0x100a","text":"ret"}]}]}"#;

    #[test]
    fn round_trip_modulo_key_order() {
        let raw = parse_function_line(LINE, 1).unwrap();
        let f = build_function(&raw).unwrap();
        let back = function_to_json(&to_raw(&f));
        let orig: Value = serde_json::from_str(LINE).unwrap();
        assert_eq!(back, orig);
    }

    #[test]
    fn missing_blocks_is_a_schema_error() {
        let err = parse_function_line(r#"{"function_id":"f","binary_id":"b"}"#, 3).unwrap_err();
        match err {
            CliError::Schema { line, field } => assert_eq!((line, field.as_str()), (3, "blocks")),
            e => panic!("{e}"),
        }
        let err = parse_function_line(r#"{"function_id":"f","binary_id":"b","blocks":[{"block_id":"x","instructions":[{"text":"ret"}]}]}"#, 1).unwrap_err();
        assert!(matches!(err, CliError::Schema { field, .. } if field == "blocks[0].instructions[0].addr"));
    }

    #[test]
    fn csv_quoting() {
        let rows = vec![("a,b".to_string(), "g".to_string(), vec![1.0, 0.1f32])];
        let s = embeddings_csv(&rows);
        assert_eq!(s, "id,group,v0,v1\n\"a,b\",g,1,0.1\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, s).unwrap();
        assert_eq!(read_embeddings(&p).unwrap(), rows);
    }
}
