// Payload types mirroring the review service JSON. Class codes are stable:
// 0 = Ki67-positive, 1 = Ki67-negative.

export type CellClass = 0 | 1;

export type Provenance = 'model' | 'human';

export interface BoxDto {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
}

export interface DetectionDto {
  index: number;
  box: BoxDto;
  cls: CellClass;
  confidence: number;
  provenance: Provenance;
}

export interface ImageStateDto {
  image_id: string;
  version: number;
  detections: DetectionDto[];
}

export interface ImageDetailDto extends ImageStateDto {
  case_id: string;
  width: number;
  height: number;
}

export interface HotspotScoreDto {
  image_id: string;
  n_pos: number;
  n_neg: number;
  index_percent: number;
}

export interface CaseScoreDto {
  case_id: string;
  hotspots: HotspotScoreDto[];
  pooled_pos: number;
  pooled_neg: number;
  index_percent: number;
  total_cells: number;
  adequate: boolean;
  band: 'low' | 'intermediate' | 'high';
  aggregation: 'pooled' | 'mean';
  config: {
    min_confidence: number;
    nms_threshold: number;
    aggregation: string;
  };
}

export interface CaseScorePayload {
  case_id: string;
  score: CaseScoreDto | null;
  warnings: string[];
}

export interface CaseSummaryDto extends CaseScorePayload {
  n_images: number;
}

export interface CaseListDto {
  cases: CaseSummaryDto[];
  config: {
    min_confidence: number;
    nms_threshold: number;
    iou_threshold: number;
    aggregation: string;
  };
}

export interface CaseDetailDto extends CaseScorePayload {
  images: Array<{ image_id: string; version: number; n_detections: number }>;
}

export interface CorrectionAction {
  kind: 'toggle' | 'delete' | 'add';
  index?: number;
  box?: BoxDto;
  cls?: CellClass;
}

export interface CorrectionResponseDto {
  state: ImageStateDto;
  case: CaseScorePayload;
}

export interface ConflictDto {
  error: string;
  current_version: number;
}
