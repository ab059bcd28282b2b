import type { FetchLike } from '../src/api.js';
import type {
  CaseScoreDto,
  CaseScorePayload,
  CorrectionResponseDto,
  DetectionDto,
  ImageDetailDto,
} from '../src/types.js';

export interface RecordedCall {
  method: string;
  url: string;
  body?: unknown;
}

export type Route = (
  method: string,
  url: string,
  body: unknown,
) => { status?: number; body: unknown } | undefined;

/** Records every request and answers from the supplied router. */
export function fakeFetch(route: Route): { fn: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fn: FetchLike = async (input, init) => {
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    calls.push({ method, url: input, body });
    const result = route(method, input, body);
    if (!result) {
      return new Response(JSON.stringify({ error: 'unrouted ' + input }), { status: 404 });
    }
    return new Response(JSON.stringify(result.body), {
      status: result.status ?? 200,
      headers: { 'Content-Type': 'application/json' },
    });
  };
  return { fn, calls };
}

export function detection(
  index: number,
  cls: 0 | 1 = 0,
  confidence = 0.9,
  provenance: 'model' | 'human' = 'model',
): DetectionDto {
  const x = 10 + index * 40;
  return {
    index,
    box: { x_min: x, y_min: 10, x_max: x + 30, y_max: 40 },
    cls,
    confidence,
    provenance,
  };
}

export function imageDetail(
  imageId: string,
  detections: DetectionDto[],
  version = 0,
): ImageDetailDto {
  return {
    image_id: imageId,
    case_id: imageId.split('_')[0]!,
    width: 640,
    height: 640,
    version,
    detections,
  };
}

export function caseScore(
  caseId: string,
  indexPercent: number,
  hotspots: Array<{ image_id: string; n_pos: number; n_neg: number; index_percent: number }>,
): CaseScoreDto {
  const pos = hotspots.reduce((a, h) => a + h.n_pos, 0);
  const neg = hotspots.reduce((a, h) => a + h.n_neg, 0);
  return {
    case_id: caseId,
    hotspots,
    pooled_pos: pos,
    pooled_neg: neg,
    index_percent: indexPercent,
    total_cells: pos + neg,
    adequate: pos + neg >= 500,
    band: indexPercent < 5 ? 'low' : indexPercent > 30 ? 'high' : 'intermediate',
    aggregation: 'pooled',
    config: { min_confidence: 0.25, nms_threshold: 0.3, aggregation: 'pooled' },
  };
}

export function scorePayload(caseId: string, score: CaseScoreDto | null): CaseScorePayload {
  return { case_id: caseId, score, warnings: [] };
}

export function correctionResponse(
  state: ImageDetailDto,
  payload: CaseScorePayload,
): CorrectionResponseDto {
  return {
    state: {
      image_id: state.image_id,
      version: state.version,
      detections: state.detections,
    },
    case: payload,
  };
}
