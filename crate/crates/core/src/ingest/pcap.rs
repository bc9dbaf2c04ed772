//! Flow feature extraction from classic libpcap captures.
//!
//! Supports both byte orders and both timestamp resolutions of the classic
//! format, Ethernet link layer only. Packets are grouped into unidirectional
//! flows by the (src IP, dst IP, src port, dst port, protocol) 5-tuple
//! within a time window (default: the whole capture), and each flow becomes
//! one feature row. A documented subset of the schema columns is filled from
//! ARP/ICMP/TCP/UDP headers and best-effort HTTP parsing; everything else is
//! `"0"`. CSV ingestion remains the authoritative path; capture extraction
//! is a convenience for raw traffic.

use std::collections::HashMap;
use std::net::Ipv4Addr;
use std::path::Path;

use super::schema::FeatureSchema;
use super::table::FeatureTable;
use super::IngestError;

const MAGIC_MICRO: u32 = 0xA1B2_C3D4;
const MAGIC_NANO: u32 = 0xA1B2_3C4D;
const LINKTYPE_ETHERNET: u32 = 1;

#[derive(Debug, Clone, Copy)]
struct Format {
    big_endian: bool,
    nanos: bool,
}

fn read_u32(bytes: &[u8], at: usize, big: bool) -> u32 {
    let b: [u8; 4] = bytes[at..at + 4].try_into().unwrap();
    if big {
        u32::from_be_bytes(b)
    } else {
        u32::from_le_bytes(b)
    }
}

fn be16(bytes: &[u8], at: usize) -> u16 {
    u16::from_be_bytes(bytes[at..at + 2].try_into().unwrap())
}

fn be32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Unidirectional flow key. ARP uses the sender/target protocol addresses
/// with zero ports; ICMP uses zero ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct FlowKey {
    src: [u8; 4],
    dst: [u8; 4],
    src_port: u16,
    dst_port: u16,
    proto: u16,
    window: u64,
}

#[derive(Debug, Clone)]
struct ParsedPacket {
    ts: f64,
    raw: Vec<u8>,
    fields: Vec<(&'static str, String)>,
}

#[derive(Debug)]
struct Flow {
    key: FlowKey,
    first_ts: f64,
    packets: Vec<ParsedPacket>,
}

/// Extracts one feature row per flow from a classic pcap file.
///
/// `window` groups packets sharing a 5-tuple into separate flows per
/// `window`-second bucket (measured from the first packet in the capture);
/// `None` treats the whole capture as one window. An empty capture yields a
/// zero-row table.
pub fn extract_flows(
    pcap_path: &Path,
    window: Option<f64>,
    schema: &FeatureSchema,
) -> Result<FeatureTable, IngestError> {
    let bytes = std::fs::read(pcap_path).map_err(|source| IngestError::Io {
        path: pcap_path.to_path_buf(),
        source,
    })?;
    extract_flows_from_bytes(&bytes, window, schema)
}

/// Same as [`extract_flows`] but over an in-memory capture.
pub fn extract_flows_from_bytes(
    bytes: &[u8],
    window: Option<f64>,
    schema: &FeatureSchema,
) -> Result<FeatureTable, IngestError> {
    if bytes.len() < 24 {
        return Err(IngestError::MalformedCapture {
            reason: "file shorter than the 24-byte global header".into(),
        });
    }
    let magic_be = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let magic_le = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let format = if magic_be == MAGIC_MICRO {
        Format { big_endian: true, nanos: false }
    } else if magic_le == MAGIC_MICRO {
        Format { big_endian: false, nanos: false }
    } else if magic_be == MAGIC_NANO {
        Format { big_endian: true, nanos: true }
    } else if magic_le == MAGIC_NANO {
        Format { big_endian: false, nanos: true }
    } else {
        return Err(IngestError::MalformedCapture {
            reason: format!("unrecognized magic 0x{magic_be:08X}"),
        });
    };
    let linktype = read_u32(bytes, 20, format.big_endian);
    if linktype != LINKTYPE_ETHERNET {
        return Err(IngestError::MalformedCapture {
            reason: format!("unsupported link type {linktype} (only Ethernet)"),
        });
    }

    let mut packets = Vec::new();
    let mut at = 24;
    while at < bytes.len() {
        if at + 16 > bytes.len() {
            return Err(IngestError::MalformedCapture {
                reason: "truncated record header".into(),
            });
        }
        let ts_sec = read_u32(bytes, at, format.big_endian) as f64;
        let ts_frac = read_u32(bytes, at + 4, format.big_endian) as f64;
        let incl_len = read_u32(bytes, at + 8, format.big_endian) as usize;
        at += 16;
        if at + incl_len > bytes.len() {
            return Err(IngestError::MalformedCapture {
                reason: "record data extends past end of file".into(),
            });
        }
        let ts = ts_sec + ts_frac / if format.nanos { 1e9 } else { 1e6 };
        packets.push((ts, &bytes[at..at + incl_len]));
        at += incl_len;
    }

    let retained = schema.len();
    if packets.is_empty() {
        return FeatureTable::new(schema.clone(), Vec::new(), None);
    }

    let t0 = packets.iter().map(|(ts, _)| *ts).fold(f64::INFINITY, f64::min);
    let mut flows: HashMap<FlowKey, Flow> = HashMap::new();
    let mut arrival: HashMap<FlowKey, usize> = HashMap::new();
    for (idx, (ts, data)) in packets.iter().enumerate() {
        let Some((mut key, parsed)) = dissect(*ts, data) else {
            continue; // non-IPv4/ARP frames contribute no flow
        };
        key.window = match window {
            Some(w) if w > 0.0 => ((*ts - t0) / w).floor() as u64,
            _ => 0,
        };
        let flow = flows.entry(key).or_insert_with(|| {
            arrival.entry(key).or_insert(idx);
            Flow {
                key,
                first_ts: *ts,
                packets: Vec::new(),
            }
        });
        flow.first_ts = flow.first_ts.min(*ts);
        flow.packets.push(parsed);
    }

    let mut flow_list: Vec<Flow> = flows.into_values().collect();
    // First-packet timestamp order; key bytes break ties so the table is
    // stable under packet reordering.
    flow_list.sort_by(|a, b| {
        a.first_ts
            .partial_cmp(&b.first_ts)
            .unwrap()
            .then_with(|| a.key.cmp(&b.key))
    });

    let mut udp_stream = 0usize;
    let mut rows = Vec::with_capacity(flow_list.len());
    for flow in &mut flow_list {
        // Canonical packet order: timestamp, then raw bytes. Field values
        // then do not depend on arrival order.
        flow.packets.sort_by(|a, b| {
            a.ts.partial_cmp(&b.ts).unwrap().then_with(|| a.raw.cmp(&b.raw))
        });
        let mut values: Vec<String> = vec!["0".to_string(); retained];
        let mut set = vec![false; retained];
        let put = |name: &str, value: &str, values: &mut Vec<String>, set: &mut Vec<bool>| {
            if let Some(i) = schema.column_index(name) {
                if !set[i] {
                    values[i] = value.to_string();
                    set[i] = true;
                }
            }
        };
        for pkt in &flow.packets {
            for (name, value) in &pkt.fields {
                put(name, value, &mut values, &mut set);
            }
        }
        let last_ts = flow.packets.iter().map(|p| p.ts).fold(0.0, f64::max);
        let span = (last_ts - flow.first_ts).max(0.0);
        if flow.key.proto == 17 {
            put("udp.stream", &udp_stream.to_string(), &mut values, &mut set);
            // Overwrite: flow-level time delta is the capture span of the flow.
            if let Some(i) = schema.column_index("udp.time_delta") {
                values[i] = format!("{span:.6}");
            }
            udp_stream += 1;
        }
        rows.push(values);
    }

    FeatureTable::new(schema.clone(), rows, None)
}

/// Dissects one Ethernet frame. Returns the flow key (window unset) and the
/// extracted field values, or `None` for unsupported frames.
fn dissect(ts: f64, data: &[u8]) -> Option<(FlowKey, ParsedPacket)> {
    if data.len() < 14 {
        return None;
    }
    let ethertype = be16(data, 12);
    let payload = &data[14..];
    let mut fields: Vec<(&'static str, String)> = Vec::new();
    fields.push(("frame.time", format!("{ts:.6}")));
    let key = match ethertype {
        0x0800 => dissect_ipv4(payload, &mut fields)?,
        0x0806 => dissect_arp(payload, &mut fields)?,
        _ => return None,
    };
    Some((
        key,
        ParsedPacket {
            ts,
            raw: data.to_vec(),
            fields,
        },
    ))
}

fn dissect_arp(p: &[u8], fields: &mut Vec<(&'static str, String)>) -> Option<FlowKey> {
    if p.len() < 28 {
        return None;
    }
    let opcode = be16(p, 6);
    let hw_size = p[4];
    let spa: [u8; 4] = p[14..18].try_into().unwrap();
    let tpa: [u8; 4] = p[24..28].try_into().unwrap();
    fields.push(("arp.opcode", opcode.to_string()));
    fields.push(("arp.hw.size", hw_size.to_string()));
    fields.push(("arp.src.proto_ipv4", Ipv4Addr::from(spa).to_string()));
    fields.push(("arp.dst.proto_ipv4", Ipv4Addr::from(tpa).to_string()));
    Some(FlowKey {
        src: spa,
        dst: tpa,
        src_port: 0,
        dst_port: 0,
        proto: 0x0806,
        window: 0,
    })
}

fn dissect_ipv4(p: &[u8], fields: &mut Vec<(&'static str, String)>) -> Option<FlowKey> {
    if p.len() < 20 || p[0] >> 4 != 4 {
        return None;
    }
    let ihl = ((p[0] & 0x0F) as usize) * 4;
    if ihl < 20 || p.len() < ihl {
        return None;
    }
    let proto = p[9];
    let src: [u8; 4] = p[12..16].try_into().unwrap();
    let dst: [u8; 4] = p[16..20].try_into().unwrap();
    fields.push(("ip.src_host", Ipv4Addr::from(src).to_string()));
    fields.push(("ip.dst_host", Ipv4Addr::from(dst).to_string()));
    let rest = &p[ihl..];
    let (src_port, dst_port) = match proto {
        6 => dissect_tcp(rest, fields)?,
        17 => dissect_udp(rest, fields)?,
        1 => {
            dissect_icmp(rest, fields)?;
            (0, 0)
        }
        _ => (0, 0),
    };
    Some(FlowKey {
        src,
        dst,
        src_port,
        dst_port,
        proto: proto as u16,
        window: 0,
    })
}

fn dissect_icmp(p: &[u8], fields: &mut Vec<(&'static str, String)>) -> Option<()> {
    if p.len() < 8 {
        return None;
    }
    let icmp_type = p[0];
    fields.push(("icmp.checksum", be16(p, 2).to_string()));
    // Sequence bytes of echo messages read little-endian.
    if icmp_type == 0 || icmp_type == 8 {
        let seq_le = u16::from_le_bytes(p[6..8].try_into().unwrap());
        fields.push(("icmp.seq_le", seq_le.to_string()));
    }
    if icmp_type == 3 && p.len() >= 8 {
        fields.push(("icmp.unused", hex::encode(&p[4..8])));
    }
    if (icmp_type == 13 || icmp_type == 14) && p.len() >= 20 {
        fields.push(("icmp.transmit_timestamp", be32(p, 16).to_string()));
    }
    Some(())
}

fn dissect_udp(p: &[u8], fields: &mut Vec<(&'static str, String)>) -> Option<(u16, u16)> {
    if p.len() < 8 {
        return None;
    }
    let sport = be16(p, 0);
    let dport = be16(p, 2);
    fields.push(("udp.port", dport.to_string()));
    Some((sport, dport))
}

fn dissect_tcp(p: &[u8], fields: &mut Vec<(&'static str, String)>) -> Option<(u16, u16)> {
    if p.len() < 20 {
        return None;
    }
    let sport = be16(p, 0);
    let dport = be16(p, 2);
    let seq = be32(p, 4);
    let ack = be32(p, 8);
    let data_off = ((p[12] >> 4) as usize) * 4;
    if data_off < 20 || p.len() < data_off {
        return None;
    }
    let flags = p[13];
    let fin = flags & 0x01 != 0;
    let syn = flags & 0x02 != 0;
    let rst = flags & 0x04 != 0;
    let ack_flag = flags & 0x10 != 0;
    fields.push(("tcp.srcport", sport.to_string()));
    fields.push(("tcp.dstport", dport.to_string()));
    fields.push(("tcp.seq", seq.to_string()));
    fields.push(("tcp.ack", ack.to_string()));
    fields.push(("tcp.ack_raw", ack.to_string()));
    fields.push(("tcp.checksum", be16(p, 16).to_string()));
    fields.push(("tcp.flags", format!("0x{:04x}", flags)));
    fields.push(("tcp.flags.ack", (ack_flag as u8).to_string()));
    fields.push(("tcp.connection.fin", (fin as u8).to_string()));
    fields.push(("tcp.connection.rst", (rst as u8).to_string()));
    fields.push(("tcp.connection.syn", ((syn && !ack_flag) as u8).to_string()));
    fields.push(("tcp.connection.synack", ((syn && ack_flag) as u8).to_string()));
    if data_off > 20 {
        fields.push(("tcp.options", hex::encode(&p[20..data_off])));
    }
    let payload = &p[data_off..];
    fields.push(("tcp.len", payload.len().to_string()));
    if !payload.is_empty() {
        fields.push(("tcp.payload", hex::encode(payload)));
        dissect_http(payload, fields);
    }
    Some((sport, dport))
}

const HTTP_METHODS: [&str; 9] = [
    "GET", "POST", "PUT", "DELETE", "HEAD", "OPTIONS", "PATCH", "TRACE", "CONNECT",
];

fn dissect_http(payload: &[u8], fields: &mut Vec<(&'static str, String)>) {
    let text = String::from_utf8_lossy(payload);
    let mut lines = text.split("\r\n");
    let Some(first) = lines.next() else { return };
    let mut parts = first.split(' ');
    let (a, b, c) = (parts.next(), parts.next(), parts.next());
    if let (Some(method), Some(uri), Some(version)) = (a, b, c) {
        if HTTP_METHODS.contains(&method) && version.starts_with("HTTP/") {
            fields.push(("http.request.method", method.to_string()));
            fields.push(("http.request.version", version.to_string()));
            if let Some(q) = uri.split_once('?').map(|(_, q)| q) {
                fields.push(("http.request.uri.query", q.to_string()));
            }
            let mut host = None;
            for line in lines.by_ref() {
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    let value = value.trim();
                    match name.to_ascii_lowercase().as_str() {
                        "host" => host = Some(value.to_string()),
                        "referer" => fields.push(("http.referer", value.to_string())),
                        "content-length" => {
                            fields.push(("http.content_length", value.to_string()))
                        }
                        _ => {}
                    }
                }
            }
            if let Some(host) = host {
                fields.push(("http.request.full_uri", format!("http://{host}{uri}")));
            }
            return;
        }
    }
    if first.starts_with("HTTP/") {
        fields.push(("http.response", "1".to_string()));
        if let Some(body) = text.split_once("\r\n\r\n").map(|(_, b)| b) {
            if !body.is_empty() {
                fields.push(("http.file_data", body.to_string()));
            }
        }
    }
}

/// Builds classic pcap byte streams for tests and demos.
pub mod forge {
    /// Accumulates packets and renders a classic pcap file.
    pub struct CaptureBuilder {
        big_endian: bool,
        nanos: bool,
        records: Vec<(u32, u32, Vec<u8>)>,
    }

    impl CaptureBuilder {
        pub fn new() -> Self {
            Self { big_endian: false, nanos: false, records: Vec::new() }
        }

        pub fn big_endian(mut self) -> Self {
            self.big_endian = true;
            self
        }

        pub fn nanosecond(mut self) -> Self {
            self.nanos = true;
            self
        }

        pub fn push(&mut self, ts_sec: u32, ts_frac: u32, frame: Vec<u8>) -> &mut Self {
            self.records.push((ts_sec, ts_frac, frame));
            self
        }

        pub fn build(&self) -> Vec<u8> {
            let magic: u32 = if self.nanos { super::MAGIC_NANO } else { super::MAGIC_MICRO };
            let w32 = |out: &mut Vec<u8>, v: u32| {
                out.extend_from_slice(&if self.big_endian {
                    v.to_be_bytes()
                } else {
                    v.to_le_bytes()
                });
            };
            let w16 = |out: &mut Vec<u8>, v: u16| {
                out.extend_from_slice(&if self.big_endian {
                    v.to_be_bytes()
                } else {
                    v.to_le_bytes()
                });
            };
            let mut out = Vec::new();
            w32(&mut out, magic);
            w16(&mut out, 2);
            w16(&mut out, 4);
            w32(&mut out, 0);
            w32(&mut out, 0);
            w32(&mut out, 65535);
            w32(&mut out, super::LINKTYPE_ETHERNET);
            for (sec, frac, frame) in &self.records {
                w32(&mut out, *sec);
                w32(&mut out, *frac);
                w32(&mut out, frame.len() as u32);
                w32(&mut out, frame.len() as u32);
                out.extend_from_slice(frame);
            }
            out
        }
    }

    impl Default for CaptureBuilder {
        fn default() -> Self {
            Self::new()
        }
    }

    fn ethernet(ethertype: u16, payload: &[u8]) -> Vec<u8> {
        let mut f = vec![0x02, 0, 0, 0, 0, 1, 0x02, 0, 0, 0, 0, 2];
        f.extend_from_slice(&ethertype.to_be_bytes());
        f.extend_from_slice(payload);
        f
    }

    fn ipv4(proto: u8, src: [u8; 4], dst: [u8; 4], payload: &[u8]) -> Vec<u8> {
        let total = 20 + payload.len() as u16;
        let mut p = Vec::with_capacity(total as usize);
        p.push(0x45);
        p.push(0);
        p.extend_from_slice(&total.to_be_bytes());
        p.extend_from_slice(&[0, 0, 0x40, 0]); // id, DF
        p.push(64);
        p.push(proto);
        p.extend_from_slice(&[0, 0]); // checksum left zero
        p.extend_from_slice(&src);
        p.extend_from_slice(&dst);
        p.extend_from_slice(payload);
        p
    }

    /// TCP segment inside an Ethernet/IPv4 frame. `flags` uses the raw TCP
    /// flag bits (0x02 SYN, 0x10 ACK, ...).
    pub fn tcp_frame(
        src: [u8; 4],
        dst: [u8; 4],
        sport: u16,
        dport: u16,
        seq: u32,
        flags: u8,
        payload: &[u8],
    ) -> Vec<u8> {
        let mut t = Vec::new();
        t.extend_from_slice(&sport.to_be_bytes());
        t.extend_from_slice(&dport.to_be_bytes());
        t.extend_from_slice(&seq.to_be_bytes());
        t.extend_from_slice(&0u32.to_be_bytes());
        t.push(0x50); // data offset 5 words
        t.push(flags);
        t.extend_from_slice(&1024u16.to_be_bytes());
        t.extend_from_slice(&[0, 0, 0, 0]); // checksum, urgent
        t.extend_from_slice(payload);
        ethernet(0x0800, &ipv4(6, src, dst, &t))
    }

    pub fn udp_frame(src: [u8; 4], dst: [u8; 4], sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
        let mut u = Vec::new();
        u.extend_from_slice(&sport.to_be_bytes());
        u.extend_from_slice(&dport.to_be_bytes());
        u.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        u.extend_from_slice(&[0, 0]);
        u.extend_from_slice(payload);
        ethernet(0x0800, &ipv4(17, src, dst, &u))
    }

    pub fn icmp_echo_frame(src: [u8; 4], dst: [u8; 4], seq: u16) -> Vec<u8> {
        let mut i = vec![8, 0, 0xAB, 0xCD, 0, 1];
        i.extend_from_slice(&seq.to_be_bytes());
        ethernet(0x0800, &ipv4(1, src, dst, &i))
    }

    pub fn arp_frame(opcode: u16, spa: [u8; 4], tpa: [u8; 4]) -> Vec<u8> {
        let mut a = Vec::new();
        a.extend_from_slice(&1u16.to_be_bytes()); // Ethernet
        a.extend_from_slice(&0x0800u16.to_be_bytes());
        a.push(6);
        a.push(4);
        a.extend_from_slice(&opcode.to_be_bytes());
        a.extend_from_slice(&[0x02, 0, 0, 0, 0, 1]);
        a.extend_from_slice(&spa);
        a.extend_from_slice(&[0x02, 0, 0, 0, 0, 2]);
        a.extend_from_slice(&tpa);
        ethernet(0x0806, &a)
    }

    /// A minimal HTTP GET request as a TCP payload.
    pub fn http_get_payload(host: &str, uri: &str) -> Vec<u8> {
        format!("GET {uri} HTTP/1.1\r\nHost: {host}\r\n\r\n").into_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::forge::*;
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::edge_iiot61()
    }

    fn extract(bytes: &[u8]) -> FeatureTable {
        extract_flows_from_bytes(bytes, None, &schema()).unwrap()
    }

    fn value<'a>(t: &'a FeatureTable, row: usize, col: &str) -> &'a str {
        &t.rows[row][t.schema.column_index(col).unwrap()]
    }

    #[test]
    fn single_syn_becomes_one_flow_row() {
        let mut b = CaptureBuilder::new();
        b.push(
            100,
            0,
            tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 5555, 443, 7, 0x02, &[]),
        );
        let t = extract(&b.build());
        assert_eq!(t.n_rows(), 1);
        assert_eq!(value(&t, 0, "tcp.dstport"), "443");
        assert_eq!(value(&t, 0, "tcp.srcport"), "5555");
        assert_eq!(value(&t, 0, "tcp.connection.syn"), "1");
        assert_eq!(value(&t, 0, "http.request.method"), "0");
        assert_eq!(value(&t, 0, "mqtt.topic"), "0");
    }

    #[test]
    fn two_interleaved_flows_order_by_first_timestamp() {
        let mut b = CaptureBuilder::new();
        b.push(10, 0, udp_frame([10, 0, 0, 1], [10, 0, 0, 2], 1000, 53, b"x"));
        b.push(11, 0, tcp_frame([10, 0, 0, 3], [10, 0, 0, 4], 2000, 80, 1, 0x02, &[]));
        b.push(12, 0, udp_frame([10, 0, 0, 1], [10, 0, 0, 2], 1000, 53, b"y"));
        let t = extract(&b.build());
        assert_eq!(t.n_rows(), 2);
        assert_eq!(value(&t, 0, "udp.port"), "53");
        assert_eq!(value(&t, 1, "tcp.dstport"), "80");
    }

    #[test]
    fn http_get_fields_extracted() {
        let payload = http_get_payload("device.local", "/status?q=1");
        let mut b = CaptureBuilder::new();
        b.push(
            5,
            0,
            tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 40000, 80, 1, 0x18, &payload),
        );
        let t = extract(&b.build());
        assert_eq!(value(&t, 0, "http.request.method"), "GET");
        assert_eq!(value(&t, 0, "http.request.version"), "HTTP/1.1");
        assert_eq!(value(&t, 0, "http.request.uri.query"), "q=1");
        assert_eq!(
            value(&t, 0, "http.request.full_uri"),
            "http://device.local/status?q=1"
        );
    }

    #[test]
    fn arp_and_icmp_fields() {
        let mut b = CaptureBuilder::new();
        b.push(1, 0, arp_frame(1, [192, 168, 0, 1], [192, 168, 0, 2]));
        b.push(2, 0, icmp_echo_frame([10, 0, 0, 1], [10, 0, 0, 2], 0x0102));
        let t = extract(&b.build());
        assert_eq!(t.n_rows(), 2);
        assert_eq!(value(&t, 0, "arp.opcode"), "1");
        assert_eq!(value(&t, 0, "arp.hw.size"), "6");
        assert_eq!(value(&t, 0, "arp.src.proto_ipv4"), "192.168.0.1");
        // 0x0102 on the wire reads 0x0201 little-endian.
        assert_eq!(value(&t, 1, "icmp.seq_le"), "513");
        assert_eq!(value(&t, 1, "icmp.checksum"), (0xABCDu16).to_string());
    }

    #[test]
    fn both_endiannesses_and_nanosecond_format_parse() {
        for builder in [
            CaptureBuilder::new(),
            CaptureBuilder::new().big_endian(),
            CaptureBuilder::new().nanosecond(),
            CaptureBuilder::new().big_endian().nanosecond(),
        ] {
            let mut b = builder;
            b.push(1, 500, udp_frame([1, 1, 1, 1], [2, 2, 2, 2], 10, 20, b"z"));
            let t = extract(&b.build());
            assert_eq!(t.n_rows(), 1);
        }
    }

    #[test]
    fn empty_capture_is_a_zero_row_table() {
        let b = CaptureBuilder::new();
        let t = extract(&b.build());
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.n_columns(), 61);
    }

    #[test]
    fn malformed_captures_error() {
        assert!(matches!(
            extract_flows_from_bytes(&[0u8; 10], None, &schema()),
            Err(IngestError::MalformedCapture { .. })
        ));
        let mut bad_magic = CaptureBuilder::new().build();
        bad_magic[0] = 0xEE;
        assert!(extract_flows_from_bytes(&bad_magic, None, &schema()).is_err());
        let mut b = CaptureBuilder::new();
        b.push(1, 0, udp_frame([1, 1, 1, 1], [2, 2, 2, 2], 10, 20, b"z"));
        let mut truncated = b.build();
        truncated.truncate(truncated.len() - 3);
        assert!(matches!(
            extract_flows_from_bytes(&truncated, None, &schema()),
            Err(IngestError::MalformedCapture { .. })
        ));
    }

    #[test]
    fn permutation_of_equal_timestamp_packets_is_stable() {
        let f1 = tcp_frame([10, 0, 0, 1], [10, 0, 0, 2], 33, 80, 1, 0x02, &[]);
        let f2 = tcp_frame(
            [10, 0, 0, 1],
            [10, 0, 0, 2],
            33,
            80,
            2,
            0x18,
            &http_get_payload("h", "/a"),
        );
        let mut a = CaptureBuilder::new();
        a.push(7, 0, f1.clone()).push(7, 0, f2.clone());
        let mut b = CaptureBuilder::new();
        b.push(7, 0, f2).push(7, 0, f1);
        let ta = extract(&a.build());
        let tb = extract(&b.build());
        assert_eq!(ta.rows, tb.rows);
    }

    #[test]
    fn window_splits_a_long_lived_tuple() {
        let mut b = CaptureBuilder::new();
        b.push(0, 0, udp_frame([1, 1, 1, 1], [2, 2, 2, 2], 10, 20, b"a"));
        b.push(100, 0, udp_frame([1, 1, 1, 1], [2, 2, 2, 2], 10, 20, b"b"));
        let t_all = extract_flows_from_bytes(&b.build(), None, &schema()).unwrap();
        assert_eq!(t_all.n_rows(), 1);
        let t_win = extract_flows_from_bytes(&b.build(), Some(10.0), &schema()).unwrap();
        assert_eq!(t_win.n_rows(), 2);
    }
}
