/** Wire types of the NER service (mirrors the HTTP JSON schema exactly). */

export interface EntityTypeInfo {
  id: string;
  dataset_tag: string;
  prompt_name: string;
  alias: string | null;
  group: "name" | "location" | "organisation" | "other";
  granularity: "coarse" | "fine" | "ultra_fine";
  datasets: string[];
}

export interface MentionOut {
  type: string;
  text: string;
  start: number | null;
  end: number | null;
}

export interface NerRequest {
  text: string;
  entity_types: string[];
  decode_mode: "greedy" | "beam";
  beam_width?: number;
}

export interface NerResponse {
  mentions: MentionOut[];
  null_types: string[];
  raw_target: string;
  parse_valid: boolean;
}

export interface HistoryEntry {
  text: string;
  entityTypes: string[];
  /** the exact serialized request body that was sent */
  body: string;
  response: NerResponse;
}
