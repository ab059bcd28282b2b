import type {
  CaseDetailDto,
  CaseListDto,
  CaseScorePayload,
  CorrectionAction,
  CorrectionResponseDto,
  ImageDetailDto,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class VersionConflictError extends Error {
  constructor(public readonly currentVersion: number) {
    super(`stale base version; image is at version ${currentVersion}`);
    this.name = 'VersionConflictError';
  }
}

export interface WhatIfParams {
  minConf?: number;
  nms?: number;
  mode?: 'pooled' | 'mean';
}

/** Thin typed client over the review service; fetch is injectable for tests. */
export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly base: string = '',
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.base + path);
    if (!response.ok) {
      throw new Error(`GET ${path} failed: ${response.status}`);
    }
    return (await response.json()) as T;
  }

  listCases(): Promise<CaseListDto> {
    return this.getJson<CaseListDto>('/api/cases');
  }

  getCase(caseId: string): Promise<CaseDetailDto> {
    return this.getJson<CaseDetailDto>(`/api/cases/${encodeURIComponent(caseId)}`);
  }

  getImage(imageId: string): Promise<ImageDetailDto> {
    return this.getJson<ImageDetailDto>(`/api/images/${encodeURIComponent(imageId)}`);
  }

  rasterUrl(imageId: string): string {
    return `${this.base}/api/images/${encodeURIComponent(imageId)}/raster`;
  }

  /** What-if score; the service computes without persisting anything. */
  whatIfScore(caseId: string, params: WhatIfParams): Promise<CaseScorePayload> {
    const query = new URLSearchParams();
    if (params.minConf !== undefined) query.set('min_conf', String(params.minConf));
    if (params.nms !== undefined) query.set('nms', String(params.nms));
    if (params.mode !== undefined) query.set('mode', params.mode);
    const suffix = query.toString() ? `?${query.toString()}` : '';
    return this.getJson<CaseScorePayload>(
      `/api/cases/${encodeURIComponent(caseId)}/score${suffix}`,
    );
  }

  async postCorrection(
    imageId: string,
    action: CorrectionAction,
    actor: string,
    baseVersion: number,
  ): Promise<CorrectionResponseDto> {
    const response = await this.fetchFn(
      `${this.base}/api/images/${encodeURIComponent(imageId)}/corrections`,
      {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ action, actor, base_version: baseVersion }),
      },
    );
    if (response.status === 409) {
      const body = (await response.json()) as { current_version: number };
      throw new VersionConflictError(body.current_version);
    }
    if (!response.ok) {
      const body = await response.json().catch(() => ({ error: String(response.status) }));
      throw new Error(`correction rejected: ${(body as { error?: string }).error ?? response.status}`);
    }
    return (await response.json()) as CorrectionResponseDto;
  }
}
