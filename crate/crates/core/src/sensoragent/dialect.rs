//! Node-native (proprietary) encodings spoken on PDi, PCi and Gi.
//!
//! Two dialects ship: a line-oriented `key=value` text format and a compact
//! binary format. Agents translate both into the same standardized Di/Ci
//! traffic, so application-facing bytes never depend on the dialect.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AppId, TaskId};
use crate::simkernel::{SimDuration, SimTime};
use crate::vruntime::{AppTask, ReportCondition};
use crate::wirecodec::{Code, SenMLRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    KeyValue,
    CompactBinary,
}

/// One sample as reported by a node's task.
#[derive(Clone, Debug, PartialEq)]
pub struct NativeReport {
    pub task_id: TaskId,
    pub record: SenMLRecord,
}

/// A node-native control call, executed by the node's own task table.
#[derive(Clone, Debug, PartialEq)]
pub enum PciCall {
    SetPriority {
        task_id: TaskId,
        priority: u32,
    },
    SetPeriod {
        task_id: TaskId,
        period: SimDuration,
    },
    DeployTask {
        task: AppTask,
        start_at: Option<SimTime>,
    },
    RemoveTask {
        task_id: TaskId,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PciReply {
    pub code: Code,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NativeFrame {
    Reports(Vec<NativeReport>),
    Call(PciCall),
    Reply(PciReply),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{dialect:?} frame: {reason}")]
pub struct DialectError {
    pub dialect: Dialect,
    pub reason: String,
}

impl Dialect {
    pub fn encode(self, frame: &NativeFrame) -> Vec<u8> {
        match self {
            Dialect::KeyValue => kv::encode(frame).into_bytes(),
            Dialect::CompactBinary => bin::encode(frame),
        }
    }

    pub fn decode(self, bytes: &[u8]) -> Result<NativeFrame, DialectError> {
        let res = match self {
            Dialect::KeyValue => std::str::from_utf8(bytes)
                .map_err(|_| "not UTF-8".to_owned())
                .and_then(kv::decode),
            Dialect::CompactBinary => bin::decode(bytes),
        };
        res.map_err(|reason| DialectError {
            dialect: self,
            reason,
        })
    }
}

mod kv {
    use std::collections::BTreeMap;

    use super::*;

    fn escape(s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '%' => out.push_str("%25"),
                ';' => out.push_str("%3B"),
                '=' => out.push_str("%3D"),
                '\n' => out.push_str("%0A"),
                c => out.push(c),
            }
        }
        out
    }

    fn unescape(s: &str) -> Result<String, String> {
        let mut out = String::with_capacity(s.len());
        let mut rest = s;
        while let Some(i) = rest.find('%') {
            out.push_str(&rest[..i]);
            let code = rest.get(i + 1..i + 3).ok_or("truncated escape")?;
            out.push(match code {
                "25" => '%',
                "3B" => ';',
                "3D" => '=',
                "0A" => '\n',
                _ => return Err(format!("bad escape %{code}")),
            });
            rest = &rest[i + 3..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn line(pairs: &[(&str, String)]) -> String {
        pairs
            .iter()
            .map(|(k, v)| format!("{k}={}", escape(v)))
            .collect::<Vec<_>>()
            .join(";")
    }

    fn condition(c: &ReportCondition) -> String {
        match c {
            ReportCondition::Always => "always".into(),
            ReportCondition::ThresholdAbove(v) => format!("above:{v}"),
            ReportCondition::Proportional { baseline, span } => format!("prop:{baseline}:{span}"),
        }
    }

    pub fn encode(frame: &NativeFrame) -> String {
        match frame {
            NativeFrame::Reports(reports) => {
                let mut lines = vec!["op=report".to_owned()];
                for r in reports {
                    lines.push(line(&[
                        ("task", r.task_id.to_string()),
                        ("bn", r.record.base_name.clone()),
                        ("n", r.record.name.clone()),
                        ("u", r.record.unit.clone()),
                        ("v", r.record.value.to_string()),
                        ("t", r.record.time.to_string()),
                    ]));
                }
                lines.join("\n")
            }
            NativeFrame::Call(PciCall::SetPriority { task_id, priority }) => line(&[
                ("op", "prio".into()),
                ("task", task_id.to_string()),
                ("p", priority.to_string()),
            ]),
            NativeFrame::Call(PciCall::SetPeriod { task_id, period }) => line(&[
                ("op", "period".into()),
                ("task", task_id.to_string()),
                ("us", period.as_micros().to_string()),
            ]),
            NativeFrame::Call(PciCall::RemoveTask { task_id }) => {
                line(&[("op", "remove".into()), ("task", task_id.to_string())])
            }
            NativeFrame::Call(PciCall::DeployTask { task, start_at }) => {
                let mut pairs = vec![
                    ("op", "deploy".to_owned()),
                    ("task", task.task_id.to_string()),
                    ("app", task.app_id.to_string()),
                    ("q", task.quantity.clone()),
                    ("us", task.period.as_micros().to_string()),
                    ("p", task.priority.to_string()),
                    ("cond", condition(&task.report_condition)),
                ];
                if let Some(s) = start_at {
                    pairs.push(("start", s.as_micros().to_string()));
                }
                line(&pairs)
            }
            NativeFrame::Reply(r) => line(&[
                ("op", "reply".into()),
                ("code", r.code.as_byte().to_string()),
                ("why", r.reason.clone()),
            ]),
        }
    }

    fn fields(l: &str) -> Result<BTreeMap<String, String>, String> {
        let mut map = BTreeMap::new();
        for part in l.split(';') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("missing '=' in {part:?}"))?;
            map.insert(k.to_owned(), unescape(v)?);
        }
        Ok(map)
    }

    fn get<'a>(m: &'a BTreeMap<String, String>, k: &str) -> Result<&'a str, String> {
        m.get(k)
            .map(String::as_str)
            .ok_or_else(|| format!("missing key {k}"))
    }

    fn num<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Result<T, String> {
        get(m, k)?
            .parse()
            .map_err(|_| format!("bad number for {k}"))
    }

    fn parse_condition(s: &str) -> Result<ReportCondition, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let f = |v: &str| v.parse::<f64>().map_err(|_| format!("bad condition {s}"));
        match parts.as_slice() {
            ["always"] => Ok(ReportCondition::Always),
            ["above", v] => Ok(ReportCondition::ThresholdAbove(f(v)?)),
            ["prop", b, sp] => Ok(ReportCondition::Proportional {
                baseline: f(b)?,
                span: f(sp)?,
            }),
            _ => Err(format!("bad condition {s}")),
        }
    }

    pub fn decode(text: &str) -> Result<NativeFrame, String> {
        let mut lines = text.split('\n');
        let head = fields(lines.next().unwrap_or_default())?;
        let op = get(&head, "op")?.to_owned();
        match op.as_str() {
            "report" => {
                let mut reports = Vec::new();
                for l in lines {
                    let m = fields(l)?;
                    reports.push(NativeReport {
                        task_id: TaskId::new(get(&m, "task")?),
                        record: SenMLRecord::new(
                            get(&m, "bn")?,
                            get(&m, "n")?,
                            get(&m, "u")?,
                            num(&m, "v")?,
                            num(&m, "t")?,
                        ),
                    });
                }
                Ok(NativeFrame::Reports(reports))
            }
            op => {
                if lines.next().is_some() {
                    return Err("trailing lines".into());
                }
                let m = head;
                let task = || get(&m, "task").map(TaskId::new);
                Ok(match op {
                    "prio" => NativeFrame::Call(PciCall::SetPriority {
                        task_id: task()?,
                        priority: num(&m, "p")?,
                    }),
                    "period" => NativeFrame::Call(PciCall::SetPeriod {
                        task_id: task()?,
                        period: SimDuration::from_micros(num(&m, "us")?),
                    }),
                    "remove" => NativeFrame::Call(PciCall::RemoveTask { task_id: task()? }),
                    "deploy" => NativeFrame::Call(PciCall::DeployTask {
                        task: AppTask {
                            task_id: task()?,
                            app_id: AppId::new(get(&m, "app")?),
                            quantity: get(&m, "q")?.to_owned(),
                            period: SimDuration::from_micros(num(&m, "us")?),
                            priority: num(&m, "p")?,
                            report_condition: parse_condition(get(&m, "cond")?)?,
                        },
                        start_at: match m.get("start") {
                            Some(_) => Some(SimTime::from_micros(num(&m, "start")?)),
                            None => None,
                        },
                    }),
                    "reply" => NativeFrame::Reply(PciReply {
                        code: Code::from_byte(num(&m, "code")?),
                        reason: get(&m, "why")?.to_owned(),
                    }),
                    other => return Err(format!("unknown op {other}")),
                })
            }
        }
    }
}

mod bin {
    use super::*;

    const REPORTS: u8 = 0x01;
    const SET_PRIORITY: u8 = 0x10;
    const SET_PERIOD: u8 = 0x11;
    const REMOVE: u8 = 0x12;
    const DEPLOY: u8 = 0x13;
    const REPLY: u8 = 0x20;

    struct W(Vec<u8>);

    impl W {
        fn str(&mut self, s: &str) {
            let b = s.as_bytes();
            let len = b.len().min(u16::MAX as usize);
            self.0.extend_from_slice(&(len as u16).to_le_bytes());
            self.0.extend_from_slice(&b[..len]);
        }
        fn u8(&mut self, v: u8) {
            self.0.push(v);
        }
        fn u32(&mut self, v: u32) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        fn u64(&mut self, v: u64) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        fn f64(&mut self, v: f64) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn encode(frame: &NativeFrame) -> Vec<u8> {
        let mut w = W(Vec::new());
        match frame {
            NativeFrame::Reports(reports) => {
                w.u8(REPORTS);
                w.u32(reports.len() as u32);
                for r in reports {
                    w.str(r.task_id.as_str());
                    w.str(&r.record.base_name);
                    w.str(&r.record.name);
                    w.str(&r.record.unit);
                    w.f64(r.record.value);
                    w.f64(r.record.time);
                }
            }
            NativeFrame::Call(PciCall::SetPriority { task_id, priority }) => {
                w.u8(SET_PRIORITY);
                w.str(task_id.as_str());
                w.u32(*priority);
            }
            NativeFrame::Call(PciCall::SetPeriod { task_id, period }) => {
                w.u8(SET_PERIOD);
                w.str(task_id.as_str());
                w.u64(period.as_micros());
            }
            NativeFrame::Call(PciCall::RemoveTask { task_id }) => {
                w.u8(REMOVE);
                w.str(task_id.as_str());
            }
            NativeFrame::Call(PciCall::DeployTask { task, start_at }) => {
                w.u8(DEPLOY);
                w.str(task.task_id.as_str());
                w.str(task.app_id.as_str());
                w.str(&task.quantity);
                w.u64(task.period.as_micros());
                w.u32(task.priority);
                match task.report_condition {
                    ReportCondition::Always => w.u8(0),
                    ReportCondition::ThresholdAbove(v) => {
                        w.u8(1);
                        w.f64(v);
                    }
                    ReportCondition::Proportional { baseline, span } => {
                        w.u8(2);
                        w.f64(baseline);
                        w.f64(span);
                    }
                }
                match start_at {
                    Some(s) => {
                        w.u8(1);
                        w.u64(s.as_micros());
                    }
                    None => w.u8(0),
                }
            }
            NativeFrame::Reply(r) => {
                w.u8(REPLY);
                w.u8(r.code.as_byte());
                w.str(&r.reason);
            }
        }
        w.0
    }

    struct R<'a>(&'a [u8]);

    impl<'a> R<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
            if self.0.len() < n {
                return Err("truncated".into());
            }
            let (head, tail) = self.0.split_at(n);
            self.0 = tail;
            Ok(head)
        }
        fn u8(&mut self) -> Result<u8, String> {
            Ok(self.take(1)?[0])
        }
        fn u32(&mut self) -> Result<u32, String> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }
        fn u64(&mut self) -> Result<u64, String> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        fn f64(&mut self) -> Result<f64, String> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        fn str(&mut self) -> Result<String, String> {
            let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
            String::from_utf8(self.take(len)?.to_vec()).map_err(|_| "string is not UTF-8".into())
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<NativeFrame, String> {
        let mut r = R(bytes);
        let frame = match r.u8()? {
            REPORTS => {
                let n = r.u32()? as usize;
                let mut reports = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let task_id = TaskId::new(r.str()?);
                    let (bn, name, unit) = (r.str()?, r.str()?, r.str()?);
                    let (v, t) = (r.f64()?, r.f64()?);
                    reports.push(NativeReport {
                        task_id,
                        record: SenMLRecord::new(bn, name, unit, v, t),
                    });
                }
                NativeFrame::Reports(reports)
            }
            SET_PRIORITY => NativeFrame::Call(PciCall::SetPriority {
                task_id: TaskId::new(r.str()?),
                priority: r.u32()?,
            }),
            SET_PERIOD => NativeFrame::Call(PciCall::SetPeriod {
                task_id: TaskId::new(r.str()?),
                period: SimDuration::from_micros(r.u64()?),
            }),
            REMOVE => NativeFrame::Call(PciCall::RemoveTask {
                task_id: TaskId::new(r.str()?),
            }),
            DEPLOY => {
                let task_id = TaskId::new(r.str()?);
                let app_id = AppId::new(r.str()?);
                let quantity = r.str()?;
                let period = SimDuration::from_micros(r.u64()?);
                let priority = r.u32()?;
                let report_condition = match r.u8()? {
                    0 => ReportCondition::Always,
                    1 => ReportCondition::ThresholdAbove(r.f64()?),
                    2 => ReportCondition::Proportional {
                        baseline: r.f64()?,
                        span: r.f64()?,
                    },
                    other => return Err(format!("bad condition tag {other}")),
                };
                let start_at = match r.u8()? {
                    0 => None,
                    1 => Some(SimTime::from_micros(r.u64()?)),
                    other => return Err(format!("bad start flag {other}")),
                };
                NativeFrame::Call(PciCall::DeployTask {
                    task: AppTask {
                        task_id,
                        app_id,
                        quantity,
                        period,
                        priority,
                        report_condition,
                    },
                    start_at,
                })
            }
            REPLY => NativeFrame::Reply(PciReply {
                code: Code::from_byte(r.u8()?),
                reason: r.str()?,
            }),
            other => return Err(format!("unknown frame tag {other:#04x}")),
        };
        if !r.0.is_empty() {
            return Err("trailing bytes".into());
        }
        Ok(frame)
    }
}
