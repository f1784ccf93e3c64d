//! JSON schemas of the request bodies accepted by the API.

use serde_json::{json, Value};

pub fn api_schema() -> Value {
    let mac = json!({"type": "string", "pattern": "^([0-9a-fA-F]{2}:){5}[0-9a-fA-F]{2}$"});
    let ipv4 = json!({"type": "string", "format": "ipv4"});
    let ipv6 = json!({"type": "string", "format": "ipv6"});
    let u8_ = json!({"type": "integer", "minimum": 0, "maximum": 255});
    let u16_ = json!({"type": "integer", "minimum": 0, "maximum": 65535});
    let vlan = json!({
        "type": "object",
        "required": ["vid"],
        "properties": {
            "pcp": {"type": "integer", "minimum": 0, "maximum": 7},
            "dei": {"type": "boolean"},
            "vid": {"type": "integer", "minimum": 0, "maximum": 4095}
        }
    });
    let eth = json!({
        "type": "object",
        "required": ["src_mac", "dst_mac"],
        "properties": {"src_mac": mac, "dst_mac": mac}
    });
    let stream = json!({
        "type": "object",
        "required": ["stream_id", "target_rate_l1", "frame_size", "eth", "l3", "tx_ports"],
        "properties": {
            "stream_id": {"type": "integer", "minimum": 1, "maximum": 255},
            "mode": {"enum": ["cbr", "poisson"]},
            "target_rate_l1": {"type": "number", "exclusiveMinimum": 0, "description": "bits/s including 20 B preamble and gap per frame"},
            "frame_size": {"type": "integer", "minimum": 64, "maximum": 9000, "description": "bytes including FCS"},
            "eth": eth,
            "l3": {"oneOf": [
                {
                    "type": "object",
                    "required": ["version", "src", "dst"],
                    "properties": {
                        "version": {"const": "ipv4"},
                        "src": ipv4, "dst": ipv4,
                        "src_random_mask": ipv4, "dst_random_mask": ipv4,
                        "tos": u8_
                    }
                },
                {
                    "type": "object",
                    "required": ["version", "src", "dst"],
                    "properties": {
                        "version": {"const": "ipv6"},
                        "src": ipv6, "dst": ipv6,
                        "src_random_mask": ipv6, "dst_random_mask": ipv6,
                        "traffic_class": u8_,
                        "flow_label": {"type": "integer", "minimum": 0, "maximum": 1048575}
                    }
                }
            ]},
            "encap": {
                "type": "object",
                "properties": {
                    "vlan": vlan,
                    "qinq": {"type": "object", "required": ["outer", "inner"], "properties": {"outer": vlan, "inner": vlan}},
                    "mpls": {"type": "array", "maxItems": 15, "items": {
                        "type": "object",
                        "required": ["label"],
                        "properties": {
                            "label": {"type": "integer", "minimum": 0, "maximum": 1048575},
                            "tc": {"type": "integer", "minimum": 0, "maximum": 7},
                            "ttl": u8_
                        }
                    }},
                    "srv6": {
                        "type": "object",
                        "required": ["src", "dst", "segments"],
                        "properties": {"src": ipv6, "dst": ipv6, "segments": {"type": "array", "minItems": 1, "maxItems": 3, "items": ipv6}}
                    },
                    "vxlan": {
                        "type": "object",
                        "required": ["eth", "src", "dst", "vni"],
                        "properties": {
                            "eth": eth, "src": ipv4, "dst": ipv4,
                            "udp_src_port": u16_,
                            "vni": {"type": "integer", "minimum": 0, "maximum": 16777215}
                        }
                    }
                }
            },
            "udp": {"type": "object", "required": ["src", "dst"], "properties": {"src": u16_, "dst": u16_}},
            "tx_ports": {"type": "array", "minItems": 1, "items": u16_}
        }
    });
    let port_config = json!({
        "type": "object",
        "required": ["port_id"],
        "properties": {"port_id": u16_, "arp_reply_enabled": {"type": "boolean"}, "arp_reply_mac": mac}
    });
    let config = json!({
        "type": "object",
        "properties": {
            "streams": {"type": "array", "items": stream},
            "port_configs": {"type": "array", "items": port_config}
        }
    });
    let blackout = json!({
        "type": "object",
        "required": ["start_ns", "duration_ns"],
        "properties": {"start_ns": {"type": "integer", "minimum": 0}, "duration_ns": {"type": "integer", "minimum": 0}}
    });
    let probability = json!({"type": "number", "minimum": 0, "maximum": 1});
    let ns = json!({"type": "integer", "minimum": 0});
    let impairment = json!({
        "type": "object",
        "additionalProperties": false,
        "properties": {
            "drop_probability": probability,
            "delay_ns": ns,
            "jitter_ns": ns,
            "reorder_probability": probability,
            "reorder_extra_delay_ns": ns,
            "capacity_l1": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "capacity_burst_bytes": {"type": ["integer", "null"], "minimum": 1},
            "blackout": {"oneOf": [blackout, {"type": "null"}]}
        }
    });
    let plan = json!({
        "type": "object",
        "required": ["tests"],
        "properties": {"tests": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "required": ["name", "config", "duration"],
            "properties": {
                "name": {"type": "string", "minLength": 1},
                "config": config,
                "duration": {"type": "number", "exclusiveMinimum": 0, "description": "seconds"},
                "impairment": impairment
            }
        }}}
    });
    let arp = json!({
        "type": "object",
        "required": ["enabled"],
        "properties": {"enabled": {"type": "boolean"}, "mac": mac}
    });
    let imix = json!({
        "type": "object",
        "properties": {
            "total_rate_l1": {"type": "number", "exclusiveMinimum": 0},
            "duration": {"type": "number", "exclusiveMinimum": 0},
            "entries": {"type": "array", "maxItems": 7, "items": {
                "type": "object",
                "required": ["frame_size", "weight"],
                "properties": {"frame_size": {"type": "integer", "minimum": 64, "maximum": 9000}, "weight": {"type": "integer", "minimum": 1}}
            }},
            "template": stream
        }
    });
    let rfc2544 = json!({
        "type": "object",
        "properties": {
            "frame_sizes": {"type": "array", "items": {"type": "integer", "minimum": 64, "maximum": 9000}},
            "trial_duration_s": {"type": "number", "exclusiveMinimum": 0},
            "max_rate": {"type": "number", "exclusiveMinimum": 0},
            "resolution": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
            "loss_tolerance": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "reset_blackout": blackout,
            "reset_trial_duration_s": {"type": "number", "exclusiveMinimum": 0},
            "template": stream
        }
    });
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "swtg API v1",
        "definitions": {
            "GenerationConfig": config,
            "StreamDescription": stream,
            "PortConfig": port_config,
            "TestPlan": plan,
            "ImpairmentSpec": impairment,
            "ArpConfig": arp,
            "ImixParams": imix,
            "Rfc2544Params": rfc2544
        }
    })
}
