import type { DurationJson } from './types';

/** Render a censored duration with explicit "≥" semantics so a bound never
 * reads as an exact survival time. */
export function formatDuration(d: DurationJson | null | undefined): string {
  if (!d || d.months === null) {
    return d && d.censored ? 'n/a (ongoing)' : 'n/a';
  }
  return d.censored ? `≥${d.months}` : `${d.months}`;
}

/** Sort key for durations: censored values order by their observed bound;
 * unknown sorts first. */
export function durationSortKey(d: DurationJson | null | undefined): number {
  if (!d || d.months === null) {
    return Number.NEGATIVE_INFINITY;
  }
  return d.months;
}

export function formatRange(range: [number, number] | null): string {
  return range ? `${range[0]}–${range[1]}` : 'n/a';
}

/** Numbers rendered by the UI come from service payloads verbatim; this
 * only stringifies, it never computes. */
export function formatNumber(value: number | null | undefined): string {
  return value === null || value === undefined ? 'n/a' : `${value}`;
}
