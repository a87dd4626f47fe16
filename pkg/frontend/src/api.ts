/** Thin client for the analysis service HTTP API. */

import type { AtlasMeta, DatasetSummary, JobSnapshot } from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async json<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) {
      throw new Error(await errorText(response, path));
    }
    return response.json() as Promise<T>;
  }

  listDatasets(): Promise<DatasetSummary[]> {
    return this.json('/datasets');
  }

  getDataset(name: string): Promise<Record<string, unknown>> {
    return this.json(`/datasets/${encodeURIComponent(name)}`);
  }

  async fetchAtlas(dataset: string): Promise<{ meta: AtlasMeta; png: Uint8Array }> {
    const meta = await this.json<AtlasMeta>(
      `/datasets/${encodeURIComponent(dataset)}/atlas-meta`);
    const response = await this.fetchFn(
      `${this.baseUrl}/datasets/${encodeURIComponent(dataset)}/atlas`);
    if (!response.ok) {
      throw new Error(await errorText(response, 'atlas'));
    }
    return { meta, png: new Uint8Array(await response.arrayBuffer()) };
  }

  async submitJob(request: Record<string, unknown>): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/jobs`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(request),
    });
    if (!response.ok) {
      throw new Error(await errorText(response, 'job submission'));
    }
    const doc = await response.json() as { id: string };
    return doc.id;
  }

  getJob(id: string): Promise<JobSnapshot> {
    return this.json(`/jobs/${encodeURIComponent(id)}`);
  }

  async fetchAsset(name: string): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/assets/${encodeURIComponent(name)}`);
    if (!response.ok) {
      throw new Error(await errorText(response, `asset ${name}`));
    }
    return response.text();
  }
}

async function errorText(response: Response, what: string): Promise<string> {
  try {
    const doc = await response.json() as { error?: string };
    if (doc.error) return doc.error;
  } catch {
    // fall through to the status line
  }
  return `${what}: HTTP ${response.status}`;
}
