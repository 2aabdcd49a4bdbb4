import type {
  HealthResponse,
  ProductsResponse,
  SchemaResponse,
  WhatIfRequest,
  WhatIfResponse,
} from "./types";

/** Server-side validation failure with the machine-readable field path. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let message = res.statusText;
  let field: string | undefined;
  try {
    const body = await res.json();
    const detail = body?.detail;
    if (typeof detail === "string") {
      message = detail;
    } else if (detail && typeof detail === "object") {
      message = detail.message ?? JSON.stringify(detail);
      field = detail.field;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, message, field);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`);
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.get("/health");
  }

  schema(): Promise<SchemaResponse> {
    return this.get("/schema");
  }

  products(): Promise<ProductsResponse> {
    return this.get("/products");
  }

  async whatIf(request: WhatIfRequest, signal?: AbortSignal): Promise<WhatIfResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/whatif`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
      signal,
    });
    await raiseForStatus(res);
    return (await res.json()) as WhatIfResponse;
  }
}
