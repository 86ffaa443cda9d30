import { EntityTypeInfo, NerRequest, NerResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`API error ${status}`);
  }
}

/** Serialize a request with a stable key order, so identical state always
 * produces a byte-identical body (history replay depends on this). */
export function buildRequestBody(
  text: string,
  entityTypes: string[],
  decodeMode: "greedy" | "beam" = "beam",
  beamWidth?: number,
): string {
  const req: NerRequest = {
    text,
    entity_types: entityTypes,
    decode_mode: decodeMode,
  };
  if (beamWidth !== undefined) {
    req.beam_width = beamWidth;
  }
  return JSON.stringify(req);
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async entityTypes(): Promise<EntityTypeInfo[]> {
    const resp = await fetch(`${this.baseUrl}/api/entity-types`);
    if (!resp.ok) {
      throw new ApiError(resp.status, await resp.text());
    }
    return (await resp.json()) as EntityTypeInfo[];
  }

  /** POST a pre-serialized body (replay sends stored bytes verbatim). */
  async nerRaw(body: string): Promise<NerResponse> {
    const resp = await fetch(`${this.baseUrl}/api/ner`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    });
    if (!resp.ok) {
      let detail: unknown;
      try {
        detail = await resp.json();
      } catch {
        detail = await resp.text();
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as NerResponse;
  }
}
