/** API base URL resolution: build-time default, overridable at runtime
 * via a global or the page's own origin. */

declare global {
  interface Window {
    CRS_API_BASE_URL?: string;
  }
}

export function apiBaseUrl(): string {
  if (typeof window !== "undefined" && window.CRS_API_BASE_URL) {
    return window.CRS_API_BASE_URL;
  }
  if (typeof window !== "undefined" && window.location?.origin) {
    return window.location.origin;
  }
  return "http://127.0.0.1:8000";
}
