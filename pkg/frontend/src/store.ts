import { ApiClient, VersionConflictError } from './api.js';
import type {
  BoxDto,
  CaseDetailDto,
  CaseListDto,
  CaseScorePayload,
  CaseSummaryDto,
  CellClass,
  CorrectionAction,
  DetectionDto,
  ImageDetailDto,
} from './types.js';

/**
 * A score as displayed: always a verbatim service payload. The UI never
 * computes an index itself; `whatIf` marks values from the non-persisting
 * threshold-preview endpoint.
 */
export interface ScoreView {
  payload: CaseScorePayload;
  whatIf: boolean;
}

export interface ClassVisibility {
  positive: boolean;
  negative: boolean;
}

/** View state plus all interaction flows, DOM-free so it is unit-testable. */
export class ReviewViewModel {
  cases: CaseSummaryDto[] = [];
  config: CaseListDto['config'] | null = null;
  selectedCase: CaseDetailDto | null = null;
  image: ImageDetailDto | null = null; // latest server-acknowledged state
  scoreView: ScoreView | null = null;
  slider = 0;
  visibility: ClassVisibility = { positive: true, negative: true };
  draft: BoxDto | null = null; // pending add-box, local until committed
  draftClass: CellClass = 0;
  selectedIndex: number | null = null;
  status = '';
  actor = 'reviewer';

  private whatIfToken = 0;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: () => void = () => {},
  ) {}

  private notify(): void {
    this.onChange();
  }

  async loadCases(): Promise<void> {
    const body = await this.api.listCases();
    this.cases = body.cases;
    this.config = body.config;
    this.notify();
  }

  async openCase(caseId: string): Promise<void> {
    const detail = await this.api.getCase(caseId);
    this.selectedCase = detail;
    this.scoreView = { payload: detail, whatIf: false };
    this.image = null;
    this.selectedIndex = null;
    this.draft = null;
    this.notify();
  }

  async openImage(imageId: string): Promise<void> {
    this.image = await this.api.getImage(imageId);
    this.selectedIndex = null;
    this.draft = null;
    this.notify();
  }

  /** Detections passing the class-visibility toggles and confidence slider.
   *  Human-added detections bypass the slider, matching the service. */
  visibleDetections(): DetectionDto[] {
    if (!this.image) return [];
    return this.image.detections.filter((d) => {
      if (d.cls === 0 && !this.visibility.positive) return false;
      if (d.cls === 1 && !this.visibility.negative) return false;
      return d.provenance === 'human' || d.confidence >= this.slider;
    });
  }

  setVisibility(cls: CellClass, visible: boolean): void {
    if (cls === 0) this.visibility.positive = visible;
    else this.visibility.negative = visible;
    this.notify();
  }

  /** Clamp to [0, 1], then preview the score at that threshold without
   *  persisting anything (read-only endpoint). */
  async setSlider(value: number): Promise<void> {
    this.slider = Math.min(1, Math.max(0, value));
    this.notify();
    const caseId = this.currentCaseId();
    if (!caseId) return;
    const token = ++this.whatIfToken;
    const payload = await this.api.whatIfScore(caseId, { minConf: this.slider });
    if (token !== this.whatIfToken) return; // a newer slider value answered already
    this.scoreView = { payload, whatIf: true };
    this.notify();
  }

  select(index: number | null): void {
    this.selectedIndex = index;
    this.notify();
  }

  beginDraft(box: BoxDto, cls: CellClass): void {
    this.draft = box;
    this.draftClass = cls;
    this.notify();
  }

  clearDraft(): void {
    this.draft = null;
    this.notify();
  }

  async toggleSelected(): Promise<void> {
    if (this.selectedIndex === null) return;
    await this.submit({ kind: 'toggle', index: this.selectedIndex });
  }

  async deleteSelected(): Promise<void> {
    if (this.selectedIndex === null) return;
    await this.submit({ kind: 'delete', index: this.selectedIndex });
    this.selectedIndex = null;
  }

  async commitDraft(): Promise<void> {
    if (!this.draft) return;
    await this.submit({ kind: 'add', box: this.draft, cls: this.draftClass });
    if (this.status === '') this.draft = null;
    this.notify();
  }

  /** POST one correction; only a server acknowledgment mutates detections
   *  or scores. A version conflict refetches and surfaces the situation,
   *  keeping any local draft for the reviewer to re-apply. */
  private async submit(action: CorrectionAction): Promise<void> {
    if (!this.image) return;
    const imageId = this.image.image_id;
    try {
      const response = await this.api.postCorrection(
        imageId,
        action,
        this.actor,
        this.image.version,
      );
      this.image = { ...this.image, ...response.state };
      this.scoreView = { payload: response.case, whatIf: false };
      this.status = '';
      this.refreshCaseSummary(response.case);
    } catch (error) {
      if (error instanceof VersionConflictError) {
        this.image = await this.api.getImage(imageId);
        this.selectedIndex = null;
        this.status =
          `Image changed on the server (now version ${error.currentVersion}); ` +
          'showing the latest state. Re-apply your edit if still needed.';
      } else {
        this.status = String(error instanceof Error ? error.message : error);
      }
    }
    this.notify();
  }

  private refreshCaseSummary(payload: CaseScorePayload): void {
    if (this.selectedCase && this.selectedCase.case_id === payload.case_id) {
      this.selectedCase = {
        ...this.selectedCase,
        score: payload.score,
        warnings: payload.warnings,
      };
    }
    this.cases = this.cases.map((c) =>
      c.case_id === payload.case_id
        ? { ...c, score: payload.score, warnings: payload.warnings }
        : c,
    );
  }

  currentCaseId(): string | null {
    if (this.image) return this.image.case_id;
    return this.selectedCase ? this.selectedCase.case_id : null;
  }
}
