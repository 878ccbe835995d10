export function safeRedirect(url: string): string {
  return isLocal(url) ? url : '/';
}

export const isLocal = (url: string): boolean => url.startsWith('/') && !url.startsWith('//');

const ALLOWED: readonly string[] = ['example.com'];
